//! Benchmark evaluation: runs retrieval over a case set, sweeps the
//! usual K cutoffs, and writes per-configuration CSV and JSON reports.
//! CSV output is byte-deterministic; latency lives only in the JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pagepyramid_core::fusion::{FusionConfig, Variant};
use pagepyramid_core::metrics::{self, MetricsError};
use pagepyramid_core::model::{IndexKind, PageRef};
use pagepyramid_core::pyramid::PyramidIndex;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clients::ServiceClients;
use crate::corpus::{self, DocumentManifest, QaCase};

/// Cutoffs reported by every sweep, ascending.
pub const K_CUTS: [usize; 6] = [1, 5, 10, 20, 50, 100];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("NoCases: benchmark is empty")]
    NoCases,
    #[error("AllCasesFailed: every case errored, first: {first}")]
    AllCasesFailed { first: String },
    #[error("MetricsError: {0}")]
    Metrics(#[from] MetricsError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("CsvError: {0}")]
    Csv(String),
}

/// Everything a run needs: the index to search, the corpus backing it
/// (for token accounting and answer generation), and the clients.
pub struct EvalContext<'a> {
    pub index: &'a PyramidIndex,
    pub manifests: &'a [DocumentManifest],
    pub clients: &'a ServiceClients,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KRow {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    /// Exact-match answer accuracy; absent when no case has a gold
    /// answer or answer generation was disabled.
    pub accuracy: Option<f64>,
    /// Mean token estimate of the retrieved pages' source text.
    pub avg_tokens: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Default, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub config_hash: String,
    /// Cases that produced a ranking; failures are listed separately.
    pub n: usize,
    pub k_rows: Vec<KRow>,
    pub mrr: f64,
    pub latency: LatencyStats,
    pub answer_grading: &'static str,
    pub failures: Vec<CaseFailure>,
    pub config: FusionConfig,
}

/// Cumulative index-subset ablations, weakest first.
pub fn index_ablation_grid(base: &FusionConfig) -> Vec<(String, FusionConfig)> {
    let subsets: [(&str, &[IndexKind]); 4] = [
        ("page_only", &[IndexKind::FusedPage]),
        ("page_sections", &[IndexKind::FusedPage, IndexKind::Section]),
        (
            "page_sections_facts",
            &[IndexKind::FusedPage, IndexKind::Section, IndexKind::Fact],
        ),
        ("full", &IndexKind::ALL),
    ];
    subsets
        .into_iter()
        .map(|(label, kinds)| {
            let mut cfg = base.clone();
            cfg.enabled_indices = kinds.iter().copied().collect();
            (label.to_string(), cfg)
        })
        .collect()
}

/// Cumulative query-variant ablations.
pub fn variant_ablation_grid(base: &FusionConfig) -> Vec<(String, FusionConfig)> {
    let subsets: [(&str, &[Variant]); 4] = [
        ("original_only", &[Variant::Original]),
        ("original_keywords", &[Variant::Original, Variant::Keywords]),
        ("original_synonyms", &[Variant::Original, Variant::Synonyms]),
        ("all_variants", &Variant::ALL),
    ];
    subsets
        .into_iter()
        .map(|(label, variants)| {
            let mut cfg = base.clone();
            cfg.enabled_variants = variants.iter().copied().collect();
            (label.to_string(), cfg)
        })
        .collect()
}

/// The standard eight-configuration ablation sweep.
pub fn default_ablations(base: &FusionConfig) -> Vec<(String, FusionConfig)> {
    let mut grid = index_ablation_grid(base);
    grid.extend(variant_ablation_grid(base));
    grid
}

fn config_hash(label: &str, cfg: &FusionConfig) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    hex::encode(h.finalize())[..12].to_string()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

struct PageTokens<'a> {
    manifests: &'a [DocumentManifest],
    index: &'a PyramidIndex,
    cache: BTreeMap<PageRef, u64>,
}

impl PageTokens<'_> {
    /// Token estimate of a page's source text, preferring the corpus
    /// file and falling back to the indexed fused text.
    fn get(&mut self, page: &PageRef) -> u64 {
        if let Some(t) = self.cache.get(page) {
            return *t;
        }
        let tokens = corpus::read_page(self.manifests, page)
            .ok()
            .and_then(|bytes| String::from_utf8(bytes).ok())
            .map(|text| metrics::count_tokens(&text))
            .or_else(|| self.index.fused_text(page).map(metrics::count_tokens))
            .unwrap_or(0);
        self.cache.insert(page.clone(), tokens);
        tokens
    }
}

/// Evaluates one retrieval configuration over the case set. Case-level
/// errors are recorded and skipped; metrics average over the rest.
pub fn run_config(
    ctx: &EvalContext<'_>,
    cases: &[QaCase],
    label: &str,
    cfg: &FusionConfig,
    with_answers: bool,
) -> Result<EvalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::NoCases);
    }
    let max_k = *K_CUTS.last().expect("cutoffs are nonempty");
    let mut eff = cfg.clone();
    eff.k_final = max_k;

    let embedder = ctx.clients.embedder();
    let expander = ctx.clients.query_expander();
    let mut tokens = PageTokens {
        manifests: ctx.manifests,
        index: ctx.index,
        cache: BTreeMap::new(),
    };

    let mut evaluated: Vec<(&QaCase, Vec<PageRef>)> = Vec::new();
    let mut failures = Vec::new();
    let mut latencies = Vec::new();
    for case in cases {
        let t0 = Instant::now();
        match pagepyramid_core::fusion::retrieve(
            &case.question,
            ctx.index,
            &eff,
            &embedder,
            &expander,
        ) {
            Ok(fused) => {
                latencies.push(t0.elapsed().as_secs_f64() * 1e3);
                evaluated.push((case, fused.page_list()));
            }
            Err(e) => failures.push(CaseFailure {
                case_id: case.case_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    if evaluated.is_empty() {
        return Err(EvalError::AllCasesFailed {
            first: failures
                .first()
                .map(|f| format!("{}: {}", f.case_id, f.error))
                .unwrap_or_default(),
        });
    }
    let n = evaluated.len();

    let mut k_rows = Vec::with_capacity(K_CUTS.len());
    for k in K_CUTS {
        let mut recall_sum = 0.0;
        let mut ndcg_sum = 0.0;
        let mut token_sum = 0u64;
        let mut answer_hits = 0usize;
        let mut answer_total = 0usize;
        for (case, ranked) in &evaluated {
            recall_sum += metrics::recall_at_k(ranked, &case.gold_pages, k)?;
            ndcg_sum += metrics::ndcg_at_k(ranked, &case.gold_pages, k)?;
            let top = &ranked[..ranked.len().min(k)];
            token_sum += top.iter().map(|p| tokens.get(p)).sum::<u64>();
            if with_answers {
                if let Some(gold) = &case.gold_answer {
                    answer_total += 1;
                    if answered_correctly(ctx, &case.question, top, gold) {
                        answer_hits += 1;
                    }
                }
            }
        }
        k_rows.push(KRow {
            k,
            recall: recall_sum / n as f64,
            ndcg: ndcg_sum / n as f64,
            accuracy: (answer_total > 0).then(|| answer_hits as f64 / answer_total as f64),
            avg_tokens: token_sum as f64 / n as f64,
        });
    }

    let mrr_cases: Vec<(Vec<PageRef>, _)> = evaluated
        .iter()
        .map(|(case, ranked)| (ranked.clone(), case.gold_pages.clone()))
        .collect();
    let mrr = metrics::mrr(&mrr_cases)?;

    latencies.sort_by(f64::total_cmp);
    let latency = LatencyStats {
        mean_ms: latencies.iter().sum::<f64>() / latencies.len() as f64,
        p50_ms: percentile(&latencies, 50.0),
        p95_ms: percentile(&latencies, 95.0),
    };

    Ok(EvalReport {
        label: label.to_string(),
        config_hash: config_hash(label, &eff),
        n,
        k_rows,
        mrr,
        latency,
        answer_grading: "exact_match",
        failures,
        config: eff,
    })
}

/// Exact-match grading of a generated answer against the gold answer.
fn answered_correctly(ctx: &EvalContext<'_>, question: &str, top: &[PageRef], gold: &str) -> bool {
    if top.is_empty() {
        return false;
    }
    let mut pages = Vec::with_capacity(top.len());
    for page in top {
        match corpus::read_page(ctx.manifests, page) {
            Ok(bytes) => pages.push(bytes),
            Err(_) => return false,
        }
    }
    match ctx.clients.generate_answer(question, &pages) {
        Ok(answer) => answer.trim().eq_ignore_ascii_case(gold.trim()),
        Err(_) => false,
    }
}

/// Runs every labeled configuration in order.
pub fn run_eval(
    ctx: &EvalContext<'_>,
    cases: &[QaCase],
    configs: &[(String, FusionConfig)],
    with_answers: bool,
) -> Result<Vec<EvalReport>, EvalError> {
    configs
        .iter()
        .map(|(label, cfg)| run_config(ctx, cases, label, cfg, with_answers))
        .collect()
}

/// CSV rows for one report: one line per K, stable formatting, no
/// latency so reruns of the same inputs are byte-identical.
pub fn report_csv(report: &EvalReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config",
        "config_hash",
        "k",
        "recall",
        "ndcg",
        "accuracy",
        "avg_tokens",
        "mrr",
        "n",
    ])
    .map_err(|e| EvalError::Csv(e.to_string()))?;
    for row in &report.k_rows {
        w.write_record([
            report.label.clone(),
            report.config_hash.clone(),
            row.k.to_string(),
            format!("{:.6}", row.recall),
            format!("{:.6}", row.ndcg),
            row.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
            format!("{:.2}", row.avg_tokens),
            format!("{:.6}", report.mrr),
            report.n.to_string(),
        ])
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?)
        .map_err(|e| EvalError::Csv(e.to_string()))
}

/// Recall sweep with configurations as rows and cutoffs as columns,
/// mirroring the usual benchmark table layout.
pub fn sweep_matrix_csv(reports: &[EvalReport]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config".to_string(), "metric".to_string()];
    header.extend(K_CUTS.iter().map(|k| format!("k={k}")));
    w.write_record(&header)
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    for report in reports {
        for (metric, pick) in [
            ("recall", (|r: &KRow| r.recall) as fn(&KRow) -> f64),
            ("ndcg", |r: &KRow| r.ndcg),
        ] {
            let mut rec = vec![report.label.clone(), metric.to_string()];
            rec.extend(report.k_rows.iter().map(|r| format!("{:.6}", pick(r))));
            w.write_record(&rec)
                .map_err(|e| EvalError::Csv(e.to_string()))?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?)
        .map_err(|e| EvalError::Csv(e.to_string()))
}

/// Writes `eval_<label>_<hash>.csv` and `.json` per report plus a
/// combined `eval_matrix.csv`, returning every path written.
pub fn write_reports(reports: &[EvalReport], out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for report in reports {
        let stem = format!("eval_{}_{}", report.label, report.config_hash);
        let csv_path = out_dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, report_csv(report)?)?;
        written.push(csv_path);
        let json_path = out_dir.join(format!("{stem}.json"));
        let mut body =
            serde_json::to_vec_pretty(report).map_err(|e| EvalError::Csv(e.to_string()))?;
        body.push(b'\n');
        std::fs::write(&json_path, body)?;
        written.push(json_path);
    }
    let matrix = out_dir.join("eval_matrix.csv");
    std::fs::write(&matrix, sweep_matrix_csv(reports)?)?;
    written.push(matrix);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexer::build_index;
    use crate::synth::{generate, SynthSpec, BENCHMARK_FILE, CORPUS_SUBDIR};

    struct Fixture {
        _dir: tempfile::TempDir,
        manifests: Vec<DocumentManifest>,
        cases: Vec<QaCase>,
        index: PyramidIndex,
        clients: ServiceClients,
    }

    fn fixture(seed: u64) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&SynthSpec {
            seed,
            docs: 6,
            pages_per_doc: 4,
            dim: 256,
        });
        out.write_tree(dir.path()).unwrap();
        let manifests = corpus::ingest(&dir.path().join(CORPUS_SUBDIR)).unwrap();
        let cases = corpus::load_benchmark(&dir.path().join(BENCHMARK_FILE), &manifests).unwrap();
        let clients = ServiceClients::mock(256);
        let (index, _) = build_index(&manifests, &clients).unwrap();
        Fixture {
            _dir: dir,
            manifests,
            cases,
            index,
            clients,
        }
    }

    #[test]
    fn planted_case_scores_perfectly_with_the_full_config() {
        let f = fixture(21);
        let ctx = EvalContext {
            index: &f.index,
            manifests: &f.manifests,
            clients: &f.clients,
        };
        let report = run_config(&ctx, &f.cases, "full", &FusionConfig::default(), true).unwrap();
        assert_eq!(report.n, 1);
        assert!(report.failures.is_empty());
        assert_eq!(report.k_rows.len(), K_CUTS.len());
        for row in &report.k_rows {
            assert_eq!(row.recall, 1.0, "recall at k={}", row.k);
            assert_eq!(row.ndcg, 1.0, "ndcg at k={}", row.k);
            assert_eq!(row.accuracy, Some(1.0), "accuracy at k={}", row.k);
            assert!(row.avg_tokens > 0.0);
        }
        assert_eq!(report.mrr, 1.0);
    }

    #[test]
    fn fact_ablation_separates_page_only_from_fact_enabled() {
        let f = fixture(22);
        let ctx = EvalContext {
            index: &f.index,
            manifests: &f.manifests,
            clients: &f.clients,
        };
        let reports = run_eval(
            &ctx,
            &f.cases,
            &index_ablation_grid(&FusionConfig::default()),
            false,
        )
        .unwrap();
        let recall10 = |label: &str| {
            reports
                .iter()
                .find(|r| r.label == label)
                .unwrap()
                .k_rows
                .iter()
                .find(|r| r.k == 10)
                .unwrap()
                .recall
        };
        assert_eq!(recall10("page_only"), 0.0);
        assert_eq!(recall10("page_sections"), 0.0);
        assert_eq!(recall10("page_sections_facts"), 1.0);
        assert_eq!(recall10("full"), 1.0);
    }

    #[test]
    fn grids_have_the_expected_arms() {
        let base = FusionConfig::default();
        let labels: Vec<String> = default_ablations(&base)
            .into_iter()
            .map(|(l, _)| l)
            .collect();
        assert_eq!(
            labels,
            [
                "page_only",
                "page_sections",
                "page_sections_facts",
                "full",
                "original_only",
                "original_keywords",
                "original_synonyms",
                "all_variants"
            ]
        );
    }

    #[test]
    fn csv_output_is_deterministic_and_latency_free() {
        let f = fixture(23);
        let ctx = EvalContext {
            index: &f.index,
            manifests: &f.manifests,
            clients: &f.clients,
        };
        let cfg = FusionConfig::default();
        let a = run_config(&ctx, &f.cases, "full", &cfg, true).unwrap();
        let b = run_config(&ctx, &f.cases, "full", &cfg, true).unwrap();
        assert_eq!(report_csv(&a).unwrap(), report_csv(&b).unwrap());
        let csv = report_csv(&a).unwrap();
        assert_eq!(csv.lines().count(), 1 + K_CUTS.len());
        assert!(!csv.contains("latency"));
        assert!(a.latency.mean_ms >= 0.0);
    }

    #[test]
    fn write_reports_names_files_by_config_hash() {
        let f = fixture(24);
        let ctx = EvalContext {
            index: &f.index,
            manifests: &f.manifests,
            clients: &f.clients,
        };
        let reports = run_eval(
            &ctx,
            &f.cases,
            &variant_ablation_grid(&FusionConfig::default()),
            false,
        )
        .unwrap();
        let out = tempfile::tempdir().unwrap();
        let written = write_reports(&reports, out.path()).unwrap();
        assert_eq!(written.len(), reports.len() * 2 + 1);
        for report in &reports {
            assert!(out
                .path()
                .join(format!("eval_{}_{}.csv", report.label, report.config_hash))
                .is_file());
        }
        let matrix = std::fs::read_to_string(out.path().join("eval_matrix.csv")).unwrap();
        assert!(matrix.starts_with("config,metric,k=1,k=5,k=10,k=20,k=50,k=100"));
        assert_eq!(matrix.lines().count(), 1 + reports.len() * 2);
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&data, 50.0), 2.0);
        assert_eq!(percentile(&data, 95.0), 4.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }
}
