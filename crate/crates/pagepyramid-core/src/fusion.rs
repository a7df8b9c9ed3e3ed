//! Weighted Reciprocal Rank Fusion across index kinds and query variants.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::embed::Embedder;
use crate::model::{EmbeddingVector, IndexKind, PageRef, RankedList};
use crate::pyramid::{hits_to_page_ranking, PyramidIndex, SearchHit};
use crate::query::{QueryBundle, QueryError, QueryExpander};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FusionError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("EmptyInput: no candidate lists to fuse")]
    EmptyInput,
    #[error(transparent)]
    Expand(#[from] QueryError),
    #[error("all retrieval cells failed: {0:?}")]
    AllCellsFailed(Vec<String>),
}

/// Which rewrite of the question a retrieval cell used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Original,
    Keywords,
    Synonyms,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Keywords, Variant::Synonyms];

    pub fn index(self) -> u8 {
        match self {
            Variant::Original => 0,
            Variant::Keywords => 1,
            Variant::Synonyms => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Variant::ALL.get(i as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Keywords => "keywords",
            Variant::Synonyms => "synonyms",
        }
    }

    /// The variant's text within an expanded bundle.
    pub fn pick(self, bundle: &QueryBundle) -> &str {
        match self {
            Variant::Original => &bundle.original,
            Variant::Keywords => &bundle.keywords,
            Variant::Synonyms => &bundle.synonyms,
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index())
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let i = u8::deserialize(d)?;
        Variant::from_index(i)
            .ok_or_else(|| serde::de::Error::custom(format!("variant must be 0, 1, or 2, got {i}")))
    }
}

/// Tuning for fusion: per-index weights, the rank-offset constant, and
/// which (index, variant) cells participate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FusionConfig {
    pub alpha: f64,
    pub weights: BTreeMap<IndexKind, f64>,
    pub k_pre: usize,
    pub k_final: usize,
    pub enabled_indices: BTreeSet<IndexKind>,
    pub enabled_variants: BTreeSet<Variant>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 60.0,
            weights: IndexKind::ALL.iter().map(|k| (*k, 1.0)).collect(),
            k_pre: 200,
            k_final: 10,
            enabled_indices: IndexKind::ALL.iter().copied().collect(),
            enabled_variants: Variant::ALL.iter().copied().collect(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(FusionError::InvalidConfig(format!(
                "alpha must be a positive finite number, got {}",
                self.alpha
            )));
        }
        for (kind, w) in &self.weights {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(FusionError::InvalidConfig(format!(
                    "weight for {} must be finite and non-negative, got {w}",
                    kind.label()
                )));
            }
        }
        if self.k_final < 1 {
            return Err(FusionError::InvalidConfig(
                "k_final must be at least 1".into(),
            ));
        }
        if self.k_pre < self.k_final {
            return Err(FusionError::InvalidConfig(format!(
                "k_pre ({}) must be at least k_final ({})",
                self.k_pre, self.k_final
            )));
        }
        if self.enabled_indices.is_empty() {
            return Err(FusionError::InvalidConfig("no indices enabled".into()));
        }
        if self.enabled_variants.is_empty() {
            return Err(FusionError::InvalidConfig(
                "no query variants enabled".into(),
            ));
        }
        Ok(())
    }

    /// Weight for one index kind; unlisted kinds weigh 1.
    pub fn weight_of(&self, kind: IndexKind) -> f64 {
        self.weights.get(&kind).copied().unwrap_or(1.0)
    }

    fn cell_enabled(&self, kind: IndexKind, variant: Variant) -> bool {
        self.enabled_indices.contains(&kind) && self.enabled_variants.contains(&variant)
    }
}

/// One fused page with its combined score.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusedEntry {
    pub page: PageRef,
    pub rrf_score: f64,
    pub contributing_lists: usize,
}

/// A single (index, variant) ranking kept for inspection.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuditCell {
    pub index: IndexKind,
    pub variant: Variant,
    pub ranking: RankedList,
}

/// Final fused ranking plus the per-cell rankings it came from.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusedResult {
    pub query: Option<QueryBundle>,
    pub entries: Vec<FusedEntry>,
    pub audit: Vec<AuditCell>,
    pub warnings: Vec<String>,
}

impl FusedResult {
    /// Pages in fused order.
    pub fn pages(&self) -> Vec<&PageRef> {
        self.entries.iter().map(|e| &e.page).collect()
    }

    /// Owned copy of the fused page order, for metric computation.
    pub fn page_list(&self) -> Vec<PageRef> {
        self.entries.iter().map(|e| e.page.clone()).collect()
    }

    pub fn audit_ranking(&self, kind: IndexKind, variant: Variant) -> Option<&RankedList> {
        self.audit
            .iter()
            .find(|c| c.index == kind && c.variant == variant)
            .map(|c| &c.ranking)
    }
}

/// Fuses per-cell page rankings: each page scores the sum over lists
/// containing it of `w / (alpha + rank)`; absence from a list adds
/// nothing. Ties break by best single-list rank, then page identity.
///
/// Cells disabled in `cfg` are ignored. Lists are folded in sorted cell
/// order so equal inputs give bit-identical scores.
pub fn rrf_fuse(
    lists: &BTreeMap<(IndexKind, Variant), RankedList>,
    cfg: &FusionConfig,
) -> Result<FusedResult, FusionError> {
    cfg.validate()?;

    struct Acc {
        score: f64,
        lists: usize,
        best_rank: u32,
    }
    let mut acc: BTreeMap<PageRef, Acc> = BTreeMap::new();
    let mut audit = Vec::new();
    for ((kind, variant), list) in lists {
        if !cfg.cell_enabled(*kind, *variant) {
            continue;
        }
        let w = cfg.weight_of(*kind);
        for e in list.entries() {
            let a = acc.entry(e.page.clone()).or_insert(Acc {
                score: 0.0,
                lists: 0,
                best_rank: u32::MAX,
            });
            a.score += w / (cfg.alpha + f64::from(e.rank));
            a.lists += 1;
            a.best_rank = a.best_rank.min(e.rank);
        }
        audit.push(AuditCell {
            index: *kind,
            variant: *variant,
            ranking: list.clone(),
        });
    }
    if audit.is_empty() {
        return Err(FusionError::EmptyInput);
    }

    let mut scored: Vec<(PageRef, Acc)> = acc.into_iter().collect();
    scored.sort_by(|(pa, aa), (pb, ab)| {
        ab.score
            .total_cmp(&aa.score)
            .then_with(|| aa.best_rank.cmp(&ab.best_rank))
            .then_with(|| pa.cmp(pb))
    });
    scored.truncate(cfg.k_final);

    Ok(FusedResult {
        query: None,
        entries: scored
            .into_iter()
            .map(|(page, a)| FusedEntry {
                page,
                rrf_score: a.score,
                contributing_lists: a.lists,
            })
            .collect(),
        audit,
        warnings: Vec::new(),
    })
}

/// End-to-end retrieval: expand the question, embed each enabled
/// variant once, search every enabled (index, variant) cell, reduce
/// hits to page rankings, and fuse.
///
/// A failing cell degrades to a warning and the rest still fuse; only
/// when nothing at all succeeds does retrieval error out.
pub fn retrieve<E, X>(
    question: &str,
    index: &PyramidIndex,
    cfg: &FusionConfig,
    embedder: &E,
    expander: &X,
) -> Result<FusedResult, FusionError>
where
    E: Embedder + ?Sized,
    X: QueryExpander + ?Sized,
{
    cfg.validate()?;
    let bundle = expander.expand(question)?;

    let mut warnings = Vec::new();
    let mut vectors: BTreeMap<Variant, EmbeddingVector> = BTreeMap::new();
    for variant in Variant::ALL {
        if !cfg.enabled_variants.contains(&variant) {
            continue;
        }
        match embedder.embed(variant.pick(&bundle)) {
            Ok(v) => {
                vectors.insert(variant, v);
            }
            Err(e) => warnings.push(format!("embed variant {}: {e}", variant.label())),
        }
    }
    if vectors.is_empty() {
        return Err(FusionError::AllCellsFailed(warnings));
    }

    let mut lists: BTreeMap<(IndexKind, Variant), RankedList> = BTreeMap::new();
    for kind in IndexKind::ALL {
        if !cfg.enabled_indices.contains(&kind) {
            continue;
        }
        for (variant, qvec) in &vectors {
            match index.search(kind, qvec, cfg.k_pre) {
                Ok(hits) => {
                    // Zero or negative similarity carries no signal for
                    // this query; ranking such hits would hand fusion
                    // mass to pages chosen only by the tie-break.
                    let positive: Vec<SearchHit> =
                        hits.into_iter().filter(|h| h.score > 0.0).collect();
                    lists.insert((kind, *variant), hits_to_page_ranking(&positive));
                }
                Err(e) => {
                    warnings.push(format!("search {}/{}: {e}", kind.label(), variant.label()))
                }
            }
        }
    }
    if lists.is_empty() {
        return Err(FusionError::AllCellsFailed(warnings));
    }

    let mut fused = rrf_fuse(&lists, cfg)?;
    fused.query = Some(bundle);
    fused.warnings = warnings;
    Ok(fused)
}
