//! Algorithmic core for pyramid page retrieval.
//!
//! A document page is described by four kinds of semantic artifacts
//! (summary, section headers, atomic facts, visual hotspots). Each
//! artifact is embedded into a unit vector and stored in one of four
//! parallel indices; queries are expanded into three variants, searched
//! against every enabled index, and the per-index page rankings are
//! merged with weighted reciprocal rank fusion.
//!
//! This crate is `no_std`-compatible (with `alloc`) and contains no I/O:
//! persistence, model clients, and the CLI live in the companion
//! `pagepyramid` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod embed;
pub mod fusion;
pub mod lateint;
mod math;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod pyramid;
pub mod query;
pub mod text;

pub use embed::{Embedder, HashEmbedder};
pub use fusion::{FusedResult, FusionConfig, Variant};
pub use model::{EmbeddingVector, IndexKind, PageArtifacts, PageRef, RankedList};
pub use pyramid::{PyramidIndex, SearchHit};
pub use query::{LexicalExpander, QueryBundle, QueryExpander};
