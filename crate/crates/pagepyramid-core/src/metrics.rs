//! Retrieval metrics over ranked page lists, plus the token-count
//! heuristic used for context budgeting.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::math;
use crate::model::PageRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("EmptyGold: a case needs at least one gold page")]
    EmptyGold,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("need at least one case")]
    EmptyCases,
}

fn check(gold: &BTreeSet<PageRef>, k: usize) -> Result<(), MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyGold);
    }
    Ok(())
}

/// 1.0 if any gold page appears in the top k of `ranked`, else 0.0.
pub fn recall_at_k(
    ranked: &[PageRef],
    gold: &BTreeSet<PageRef>,
    k: usize,
) -> Result<f64, MetricsError> {
    check(gold, k)?;
    let hit = ranked.iter().take(k).any(|p| gold.contains(p));
    Ok(if hit { 1.0 } else { 0.0 })
}

/// Binary-relevance nDCG: gain 1 for gold pages discounted by
/// log2(rank + 1), normalized by the ideal placement of
/// min(k, gold size) gold pages.
pub fn ndcg_at_k(
    ranked: &[PageRef],
    gold: &BTreeSet<PageRef>,
    k: usize,
) -> Result<f64, MetricsError> {
    check(gold, k)?;
    let mut dcg = 0.0f64;
    for (i, page) in ranked.iter().take(k).enumerate() {
        if gold.contains(page) {
            dcg += 1.0 / math::log2((i + 2) as f64);
        }
    }
    let ideal = k.min(gold.len());
    let mut idcg = 0.0f64;
    for rank in 1..=ideal {
        idcg += 1.0 / math::log2((rank + 1) as f64);
    }
    Ok(dcg / idcg)
}

/// Mean reciprocal rank of the first gold page per case; a case whose
/// list contains no gold page contributes 0.
pub fn mrr(cases: &[(Vec<PageRef>, BTreeSet<PageRef>)]) -> Result<f64, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::EmptyCases);
    }
    let mut total = 0.0f64;
    for (ranked, gold) in cases {
        if gold.is_empty() {
            return Err(MetricsError::EmptyGold);
        }
        if let Some(pos) = ranked.iter().position(|p| gold.contains(p)) {
            total += 1.0 / (pos + 1) as f64;
        }
    }
    Ok(total / cases.len() as f64)
}

/// Crude context-size estimate: one token per 4 UTF-8 bytes, rounded
/// up. Comparative only; not any real tokenizer.
pub fn count_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}
