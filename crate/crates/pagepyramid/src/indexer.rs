//! Index construction: walks a corpus, extracts per-page artifacts
//! through the clients, embeds them, and reports build statistics.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pagepyramid_core::model::{IndexKind, PageRef};
use pagepyramid_core::pyramid::{BuildMeta, PyramidError, PyramidIndex};
use serde::Serialize;

use crate::clients::{ClientsError, ExtractionRequest, ServiceClients};
use crate::corpus::{CorpusError, DocumentManifest};

#[derive(Debug, thiserror::Error)]
pub enum IndexerError {
    #[error("{0}")]
    Corpus(#[from] CorpusError),
    #[error("page {page}: {source}")]
    Extraction { page: PageRef, source: ClientsError },
    #[error("page {page}: {source}")]
    Insert { page: PageRef, source: PyramidError },
    #[error("index validation failed: {0}")]
    Validate(PyramidError),
}

/// Build summary for operators: corpus size, per-set vector counts,
/// and the median per-page vector budget.
#[derive(Debug, Clone, Serialize)]
pub struct IndexBuildReport {
    pub pages: usize,
    pub dim: usize,
    pub vectors_total: usize,
    pub vectors_per_index: BTreeMap<String, usize>,
    pub median_budget: f64,
    pub elapsed_ms: u128,
}

/// Median of a budget multiset; even counts average the middle pair.
pub fn median_budget(budgets: &BTreeMap<PageRef, usize>) -> f64 {
    let mut values: Vec<usize> = budgets.values().copied().collect();
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Builds a fresh index over every page of every manifest, in corpus
/// order. Page numbers follow file order within each document.
pub fn build_index(
    manifests: &[DocumentManifest],
    clients: &ServiceClients,
) -> Result<(PyramidIndex, IndexBuildReport), IndexerError> {
    let started = Instant::now();
    let meta = BuildMeta {
        embedder_model: clients.embed_model_id().to_string(),
        built_at_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut index = PyramidIndex::new(clients.dim(), meta);
    let embedder = clients.embedder();

    for manifest in manifests {
        for (i, path) in manifest.pages.iter().enumerate() {
            let page = PageRef::new(&manifest.doc_id, i as u32 + 1).map_err(|e| {
                CorpusError::SchemaError {
                    line: 0,
                    message: e.to_string(),
                }
            })?;
            let bytes =
                std::fs::read(path).map_err(|_| CorpusError::UnreadablePage(path.clone()))?;
            let artifacts = clients
                .extract_page(&ExtractionRequest {
                    page_image_bytes: bytes,
                    dpi: manifest.dpi,
                })
                .map_err(|source| IndexerError::Extraction {
                    page: page.clone(),
                    source,
                })?;
            index
                .insert_page(&page, &artifacts, &embedder)
                .map_err(|source| IndexerError::Insert {
                    page: page.clone(),
                    source,
                })?;
        }
    }
    index.validate().map_err(IndexerError::Validate)?;

    let report = IndexBuildReport {
        pages: index.page_count(),
        dim: index.dim(),
        vectors_total: index.total_vectors(),
        vectors_per_index: IndexKind::ALL
            .iter()
            .map(|k| (k.label().to_string(), index.len_of(*k)))
            .collect(),
        median_budget: median_budget(&index.per_page_budgets()),
        elapsed_ms: started.elapsed().as_millis(),
    };
    Ok((index, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec, CORPUS_SUBDIR};

    #[test]
    fn median_handles_odd_even_and_empty() {
        let page = |n| PageRef::new("d", n).unwrap();
        let mut b = BTreeMap::new();
        assert_eq!(median_budget(&b), 0.0);
        b.insert(page(1), 11);
        b.insert(page(2), 13);
        b.insert(page(3), 17);
        assert_eq!(median_budget(&b), 13.0);
        b.insert(page(4), 12);
        assert_eq!(median_budget(&b), 12.5);
    }

    #[test]
    fn builds_every_page_with_full_budgets() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&SynthSpec {
            seed: 9,
            docs: 4,
            pages_per_doc: 3,
            dim: 128,
        });
        out.write_tree(dir.path()).unwrap();
        let manifests = crate::corpus::ingest(&dir.path().join(CORPUS_SUBDIR)).unwrap();
        let clients = ServiceClients::mock(128);
        let (index, report) = build_index(&manifests, &clients).unwrap();

        assert_eq!(report.pages, 12);
        assert_eq!(report.dim, 128);
        assert_eq!(report.vectors_total, index.total_vectors());
        assert_eq!(report.vectors_per_index["fused_page"], 12);
        assert!((10.0..=17.0).contains(&report.median_budget));
        for (page, budget) in index.per_page_budgets() {
            let fixture = crate::corpus::read_page(&manifests, &page).unwrap();
            let artifacts = clients
                .extract_page(&ExtractionRequest {
                    page_image_bytes: fixture,
                    dpi: 180,
                })
                .unwrap();
            assert_eq!(budget, artifacts.vector_budget());
        }
    }

    #[test]
    fn unreadable_page_surfaces_as_a_corpus_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&SynthSpec {
            seed: 9,
            docs: 1,
            pages_per_doc: 2,
            dim: 64,
        });
        out.write_tree(dir.path()).unwrap();
        let manifests = crate::corpus::ingest(&dir.path().join(CORPUS_SUBDIR)).unwrap();
        std::fs::remove_file(&manifests[0].pages[1]).unwrap();
        assert!(matches!(
            build_index(&manifests, &ServiceClients::mock(64)).unwrap_err(),
            IndexerError::Corpus(CorpusError::UnreadablePage(_))
        ));
    }
}
