//! IO companion to `pagepyramid-core`: model service clients, corpus
//! and benchmark loading, index persistence, evaluation reporting, the
//! HTTP service, and a synthetic corpus generator backing the CLI.

pub mod clients;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod indexer;
pub mod service;
pub mod store;
pub mod synth;
