//! Shared tokenization used by the hashing embedder and query expansion.
//!
//! A token is a maximal run of alphanumeric characters; everything else
//! is a separator. All consumers lowercase through the same path so the
//! embedder, keyword fallback, and synonym rewriting agree on what a
//! "token" is.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercased tokens in order of appearance.
pub fn tokens(text: &str) -> Vec<String> {
    raw_tokens(text)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Tokens with their original casing preserved.
pub fn raw_tokens(text: &str) -> Vec<&str> {
    token_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}

/// Byte ranges of each token, for in-place rewriting.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push((s, i));
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}
