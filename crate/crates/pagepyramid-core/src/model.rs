//! Core domain types shared by every other module. No I/O.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::math;

/// Unit-norm tolerance for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("ZeroVector: cannot normalize an all-zero vector")]
    ZeroVector,
    #[error("NonFinite: vector contains NaN or infinite components")]
    NonFinite,
    #[error("doc_id must be non-empty")]
    EmptyDocId,
    #[error("page_no must be >= 1")]
    PageNumberZero,
    #[error("summary must be non-empty")]
    EmptySummary,
    #[error("empty {kind} entry at position {index}")]
    EmptyArtifact { kind: &'static str, index: usize },
    #[error("ranked list invariant violated: {0}")]
    InvalidRanking(String),
}

/// Identifies one page of one document. Page numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageRef {
    doc_id: String,
    page_no: u32,
}

impl PageRef {
    pub fn new(doc_id: impl Into<String>, page_no: u32) -> Result<Self, ModelError> {
        let doc_id = doc_id.into();
        if doc_id.is_empty() {
            return Err(ModelError::EmptyDocId);
        }
        if page_no == 0 {
            return Err(ModelError::PageNumberZero);
        }
        Ok(Self { doc_id, page_no })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    /// 1-based page number within the document.
    pub fn page_no(&self) -> u32 {
        self.page_no
    }
}

#[cfg(feature = "serde")]
mod page_ref_serde {
    use super::{ModelError, PageRef};
    use alloc::string::String;

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(rename = "PageRef")]
    struct Raw {
        doc_id: String,
        page_no: u32,
    }

    impl serde::Serialize for PageRef {
        fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            Raw {
                doc_id: self.doc_id.clone(),
                page_no: self.page_no,
            }
            .serialize(s)
        }
    }

    impl<'de> serde::Deserialize<'de> for PageRef {
        fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let raw = Raw::deserialize(d)?;
            PageRef::new(raw.doc_id, raw.page_no).map_err(|e: ModelError| {
                serde::de::Error::custom(alloc::format!("invalid page ref: {e}"))
            })
        }
    }
}

impl core::fmt::Display for PageRef {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.page_no)
    }
}

/// The four semantic artifact sets extracted from one page image.
///
/// List order is preserved from extraction; ordinals elsewhere in the
/// system refer to positions in these lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageArtifacts {
    pub summary: String,
    pub sections: Vec<String>,
    pub facts: Vec<String>,
    pub hotspots: Vec<String>,
}

impl PageArtifacts {
    /// Validates and trims all entries. The summary and every list
    /// element must be non-empty after whitespace trimming.
    pub fn new(
        summary: impl Into<String>,
        sections: Vec<String>,
        facts: Vec<String>,
        hotspots: Vec<String>,
    ) -> Result<Self, ModelError> {
        let summary = summary.into().trim().to_string();
        if summary.is_empty() {
            return Err(ModelError::EmptySummary);
        }
        let clean = |kind: &'static str, items: Vec<String>| -> Result<Vec<String>, ModelError> {
            items
                .into_iter()
                .enumerate()
                .map(|(index, s)| {
                    let s = s.trim().to_string();
                    if s.is_empty() {
                        Err(ModelError::EmptyArtifact { kind, index })
                    } else {
                        Ok(s)
                    }
                })
                .collect()
        };
        Ok(Self {
            summary,
            sections: clean("section", sections)?,
            facts: clean("fact", facts)?,
            hotspots: clean("hotspot", hotspots)?,
        })
    }

    /// Vectors this page will contribute to the index: 1 + S + F + H.
    pub fn vector_budget(&self) -> usize {
        1 + self.sections.len() + self.facts.len() + self.hotspots.len()
    }
}

/// A dense unit vector. Construction guarantees finite components and
/// an L2 norm of 1 within [`NORM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Wraps components that are already unit-norm; verifies the invariant.
    pub fn from_unit(values: Vec<f32>) -> Result<Self, ModelError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let norm = math::l2_norm(&values);
        if math::abs(norm - 1.0) > NORM_TOLERANCE {
            return Err(ModelError::ZeroVector);
        }
        Ok(Self { values })
    }
}

/// Scales a nonzero finite vector to unit L2 norm, preserving direction.
///
/// The norm is accumulated in `f64` so the result stays within
/// [`NORM_TOLERANCE`] of unit length at high dimensions.
pub fn normalize(values: &[f32]) -> Result<EmbeddingVector, ModelError> {
    if values.is_empty() {
        return Err(ModelError::ZeroVector);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let norm = math::l2_norm(values);
    if norm == 0.0 {
        return Err(ModelError::ZeroVector);
    }
    let inv = 1.0 / norm;
    let scaled = values
        .iter()
        .map(|v| (f64::from(*v) * inv) as f32)
        .collect();
    Ok(EmbeddingVector { values: scaled })
}

/// The four parallel indices a page feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum IndexKind {
    FusedPage,
    Section,
    Fact,
    Hotspot,
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [
        IndexKind::FusedPage,
        IndexKind::Section,
        IndexKind::Fact,
        IndexKind::Hotspot,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IndexKind::FusedPage => "fused_page",
            IndexKind::Section => "section",
            IndexKind::Fact => "fact",
            IndexKind::Hotspot => "hotspot",
        }
    }

    /// Stem used for per-index vector blob file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            IndexKind::FusedPage => "fusedpage",
            IndexKind::Section => "section",
            IndexKind::Fact => "fact",
            IndexKind::Hotspot => "hotspot",
        }
    }

    pub fn parse(s: &str) -> Option<IndexKind> {
        match s.trim().to_lowercase().as_str() {
            "page" | "fusedpage" | "fused_page" => Some(IndexKind::FusedPage),
            "section" | "sections" => Some(IndexKind::Section),
            "fact" | "facts" => Some(IndexKind::Fact),
            "hotspot" | "hotspots" => Some(IndexKind::Hotspot),
            _ => None,
        }
    }
}

impl core::fmt::Display for IndexKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// One embedded artifact, addressed by `(kind, page, ordinal)`.
///
/// `ordinal` is the 0-based position within the page's artifact list;
/// fused-page records always carry ordinal 0.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub kind: IndexKind,
    pub page: PageRef,
    pub ordinal: u32,
    pub vector: EmbeddingVector,
    pub source_text: String,
}

/// One entry of a [`RankedList`]. Ranks are 1-based.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedEntry {
    pub page: PageRef,
    pub rank: u32,
    pub score: f64,
}

/// An ordered page ranking: ranks run 1..=len with no gaps, scores are
/// non-increasing, and no page appears twice. This is the unit rank
/// fusion consumes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Builds a ranking from `(page, score)` pairs: sorts by score
    /// descending with ties broken by `(doc_id, page_no)` ascending,
    /// then assigns ranks 1..=n. Duplicate pages keep their best score.
    pub fn from_scored(pairs: Vec<(PageRef, f64)>) -> Self {
        let mut best: Vec<(PageRef, f64)> = Vec::new();
        for (page, score) in pairs {
            match best.iter_mut().find(|(p, _)| *p == page) {
                Some((_, s)) => {
                    if score > *s {
                        *s = score;
                    }
                }
                None => best.push((page, score)),
            }
        }
        best.sort_by(|(pa, sa), (pb, sb)| {
            sb.partial_cmp(sa)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then_with(|| pa.cmp(pb))
        });
        let entries = best
            .into_iter()
            .enumerate()
            .map(|(i, (page, score))| RankedEntry {
                page,
                rank: (i + 1) as u32,
                score,
            })
            .collect();
        Self { entries }
    }

    /// Validates pre-ranked entries against the list invariants.
    pub fn try_new(entries: Vec<RankedEntry>) -> Result<Self, ModelError> {
        for (i, e) in entries.iter().enumerate() {
            if e.rank as usize != i + 1 {
                return Err(ModelError::InvalidRanking(
                    "ranks must be exactly 1..=len".to_string(),
                ));
            }
            if i > 0 && entries[i - 1].score < e.score {
                return Err(ModelError::InvalidRanking(
                    "scores must be non-increasing with rank".to_string(),
                ));
            }
        }
        for (i, a) in entries.iter().enumerate() {
            if entries[i + 1..].iter().any(|b| b.page == a.page) {
                return Err(ModelError::InvalidRanking(
                    "each page may appear at most once".to_string(),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rank of the given page, if present.
    pub fn rank_of(&self, page: &PageRef) -> Option<u32> {
        self.entries
            .iter()
            .find(|e| &e.page == page)
            .map(|e| e.rank)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for RankedList {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for RankedList {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<RankedEntry>::deserialize(d)?;
        RankedList::try_new(entries)
            .map_err(|e| serde::de::Error::custom(alloc::format!("invalid ranking: {e}")))
    }
}
