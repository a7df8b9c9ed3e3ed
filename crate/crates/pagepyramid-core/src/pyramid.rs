//! Four-level page index: fused page, section, fact, and hotspot vectors
//! with exact exhaustive top-k search.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::embed::{EmbedError, Embedder};
use crate::math;
use crate::model::{EmbeddingVector, IndexKind, PageArtifacts, PageRef, RankedList, VectorRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PyramidError {
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate {kind} record for {page} ordinal {ordinal}", kind = kind.label())]
    DuplicateRecord {
        kind: IndexKind,
        page: PageRef,
        ordinal: u32,
    },
    #[error("page {0} has more than one fused record")]
    DuplicateFusedPage(PageRef),
    #[error("page {0} has no fused record")]
    MissingFusedPage(PageRef),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Provenance recorded alongside the vectors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BuildMeta {
    pub embedder_model: String,
    pub built_at_unix: u64,
}

/// One scored record from a single-index search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub record: VectorRecord,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
struct VectorSet {
    records: Vec<VectorRecord>,
    keys: BTreeSet<(PageRef, u32)>,
}

/// The four vector sets over a page corpus.
///
/// Immutable once built; searches are exact and exhaustive, which keeps
/// results reproducible and lets tests compare against naive scoring.
#[derive(Debug, Clone)]
pub struct PyramidIndex {
    dim: usize,
    meta: BuildMeta,
    sets: BTreeMap<IndexKind, VectorSet>,
    pages: BTreeSet<PageRef>,
}

impl PyramidIndex {
    pub fn new(dim: usize, meta: BuildMeta) -> Self {
        assert!(dim > 0, "index dimension must be positive");
        let sets = IndexKind::ALL
            .iter()
            .map(|k| (*k, VectorSet::default()))
            .collect();
        Self {
            dim,
            meta,
            sets,
            pages: BTreeSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    pub fn pages(&self) -> impl Iterator<Item = &PageRef> {
        self.pages.iter()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn records_of(&self, kind: IndexKind) -> &[VectorRecord] {
        &self.sets[&kind].records
    }

    pub fn len_of(&self, kind: IndexKind) -> usize {
        self.sets[&kind].records.len()
    }

    pub fn total_vectors(&self) -> usize {
        IndexKind::ALL.iter().map(|k| self.len_of(*k)).sum()
    }

    /// Vector count for one page across all four sets.
    pub fn budget_of(&self, page: &PageRef) -> usize {
        self.sets
            .values()
            .map(|s| s.records.iter().filter(|r| &r.page == page).count())
            .sum()
    }

    pub fn per_page_budgets(&self) -> BTreeMap<PageRef, usize> {
        let mut out = BTreeMap::new();
        for set in self.sets.values() {
            for r in &set.records {
                *out.entry(r.page.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Fused representation text of a page, if indexed.
    pub fn fused_text(&self, page: &PageRef) -> Option<&str> {
        self.sets[&IndexKind::FusedPage]
            .records
            .iter()
            .find(|r| &r.page == page)
            .map(|r| r.source_text.as_str())
    }

    /// Adds records, enforcing per-kind key uniqueness and a single
    /// fused record per page.
    pub fn add_records(&mut self, records: Vec<VectorRecord>) -> Result<(), PyramidError> {
        for record in records {
            if record.vector.dim() != self.dim {
                return Err(PyramidError::DimensionMismatch {
                    expected: self.dim,
                    got: record.vector.dim(),
                });
            }
            let set = self.sets.get_mut(&record.kind).expect("all kinds present");
            let key = (record.page.clone(), record.ordinal);
            if !set.keys.insert(key) {
                return Err(PyramidError::DuplicateRecord {
                    kind: record.kind,
                    page: record.page,
                    ordinal: record.ordinal,
                });
            }
            if record.kind == IndexKind::FusedPage
                && set.records.iter().any(|r| r.page == record.page)
            {
                return Err(PyramidError::DuplicateFusedPage(record.page));
            }
            self.pages.insert(record.page.clone());
            set.records.push(record);
        }
        Ok(())
    }

    /// Embeds and inserts one page's records; returns how many.
    pub fn insert_page<E: Embedder + ?Sized>(
        &mut self,
        page: &PageRef,
        artifacts: &PageArtifacts,
        embedder: &E,
    ) -> Result<usize, PyramidError> {
        let records = build_page(page, artifacts, embedder)?;
        let n = records.len();
        self.add_records(records)?;
        Ok(n)
    }

    /// Checks the cross-set invariant that every known page has exactly
    /// one fused record. Run after a build or load completes.
    pub fn validate(&self) -> Result<(), PyramidError> {
        let fused = &self.sets[&IndexKind::FusedPage];
        for page in &self.pages {
            if !fused.keys.iter().any(|(p, _)| p == page) {
                return Err(PyramidError::MissingFusedPage(page.clone()));
            }
        }
        Ok(())
    }

    /// Exact top-k by dot product over one vector set.
    ///
    /// Ties are broken by (doc_id, page_no, ordinal) ascending so equal
    /// scores always order the same way.
    pub fn search(
        &self,
        kind: IndexKind,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<SearchHit>, PyramidError> {
        if k == 0 {
            return Err(PyramidError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(PyramidError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut hits: Vec<SearchHit> = self.sets[&kind]
            .records
            .iter()
            .map(|record| SearchHit {
                record: record.clone(),
                score: math::dot(query.values(), record.vector.values()),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| {
                let ka = (&a.record.page, a.record.ordinal);
                let kb = (&b.record.page, b.record.ordinal);
                ka.cmp(&kb)
            })
        });
        hits.truncate(k);
        Ok(hits)
    }
}

/// Text embedded for the fused page vector: the summary, then a blank
/// line, then all hotspot strings joined by "; ". Summary alone when the
/// page has no hotspots.
pub fn fused_page_text(artifacts: &PageArtifacts) -> String {
    if artifacts.hotspots.is_empty() {
        artifacts.summary.to_string()
    } else {
        format!("{}\n\n{}", artifacts.summary, artifacts.hotspots.join("; "))
    }
}

/// Embeds one page into its 1 + S + F + H records. Ordinals follow
/// artifact list order; the fused record is ordinal 0.
pub fn build_page<E: Embedder + ?Sized>(
    page: &PageRef,
    artifacts: &PageArtifacts,
    embedder: &E,
) -> Result<Vec<VectorRecord>, PyramidError> {
    let mut out = Vec::with_capacity(artifacts.vector_budget());
    let fused = fused_page_text(artifacts);
    out.push(VectorRecord {
        kind: IndexKind::FusedPage,
        page: page.clone(),
        ordinal: 0,
        vector: embedder.embed(&fused)?,
        source_text: fused,
    });
    let levels = [
        (IndexKind::Section, &artifacts.sections),
        (IndexKind::Fact, &artifacts.facts),
        (IndexKind::Hotspot, &artifacts.hotspots),
    ];
    for (kind, texts) in levels {
        for (i, text) in texts.iter().enumerate() {
            out.push(VectorRecord {
                kind,
                page: page.clone(),
                ordinal: i as u32,
                vector: embedder.embed(text)?,
                source_text: text.clone(),
            });
        }
    }
    Ok(out)
}

/// Reduces vector hits to a page ranking: each page scores its best
/// hit, pages sort by score descending with (doc_id, page_no) ties.
pub fn hits_to_page_ranking(hits: &[SearchHit]) -> RankedList {
    RankedList::from_scored(
        hits.iter()
            .map(|h| (h.record.page.clone(), h.score))
            .collect(),
    )
}
