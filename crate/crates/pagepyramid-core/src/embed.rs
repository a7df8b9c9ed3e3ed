//! Text embedding contract plus the deterministic offline embedder.

use alloc::string::String;
use alloc::vec;

use crate::model::{normalize, EmbeddingVector};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("EmptyText: nothing to embed")]
    EmptyText,
    #[error("degenerate embedding: token contributions cancelled out")]
    Degenerate,
    #[error("ServiceError: {0}")]
    Service(String),
}

/// Anything that turns text into a unit vector of a fixed dimension.
///
/// Implementations must be deterministic for a fixed `(model, text)`
/// pair; retrieval embeds each query variant exactly once and reuses
/// the vector across all indices.
pub trait Embedder {
    fn dim(&self) -> usize;

    /// Identifier recorded in index metadata, e.g. a model name.
    fn model_id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// FNV-1a 64-bit hash over UTF-8 bytes.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Deterministic token-hashing embedder for offline runs.
///
/// Lowercases, splits on non-alphanumeric runs, and for each token adds
/// +1 or -1 (sign from hash bit 63) at component `hash mod dim`, then
/// normalizes the accumulated vector. Order-insensitive and scale
/// invariant: "revenue revenue" embeds identically to "revenue".
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    model_id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            model_id: alloc::format!("mock-fnv1a-{dim}"),
        }
    }

    /// Component index and sign a single token contributes to.
    pub fn token_slot(&self, token: &str) -> (usize, f32) {
        let h = fnv1a_64(token.to_lowercase().as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens = text::tokens(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0f32; self.dim];
        for token in &tokens {
            let (slot, sign) = self.token_slot(token);
            acc[slot] += sign;
        }
        normalize(&acc).map_err(|_| EmbedError::Degenerate)
    }
}
