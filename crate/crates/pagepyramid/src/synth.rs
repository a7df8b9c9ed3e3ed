//! Seeded synthetic corpora for tests and demos. Each corpus plants a
//! unique token inside one fact line of one page; querying that token
//! must surface the planted page, which gives end-to-end runs a known
//! right answer without any external data.

use std::io;
use std::path::Path;

use pagepyramid_core::embed::HashEmbedder;
use pagepyramid_core::model::PageRef;
use pagepyramid_core::query::LexicalExpander;
use pagepyramid_core::text;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CORPUS_SUBDIR: &str = "corpus";
pub const BENCHMARK_FILE: &str = "benchmark.jsonl";

/// Filler vocabulary for document bodies. Kept small so token hash
/// slots stay sparse and a fresh planted token can always find a free
/// one.
const VOCAB: &[&str] = &[
    "ledger",
    "margin",
    "audit",
    "quarter",
    "segment",
    "payroll",
    "invoice",
    "forecast",
    "capital",
    "equity",
    "dividend",
    "treasury",
    "accrual",
    "voucher",
    "pension",
    "royalty",
    "tariff",
    "freight",
    "logistics",
    "turnover",
    "backlog",
    "pipeline",
    "contract",
    "warranty",
    "lease",
    "amortize",
    "deficit",
    "surplus",
    "subsidy",
    "rebate",
    "holdings",
    "portfolio",
    "custody",
    "escrow",
    "collateral",
    "maturity",
    "coupon",
    "yield",
    "hedging",
    "exposure",
    "variance",
    "baseline",
    "benchmark",
    "forecourt",
    "terminal",
    "refinery",
    "turbine",
    "cargo",
    "vessel",
    "drilling",
    "mineral",
    "smelter",
    "alloy",
    "polymer",
    "reagent",
    "catalyst",
    "membrane",
    "sensor",
    "gateway",
    "firmware",
    "console",
    "adapter",
    "chassis",
    "spindle",
    "gearbox",
    "conveyor",
    "furnace",
    "kiln",
    "granary",
    "orchard",
    "vineyard",
    "harvest",
    "irrigation",
    "fertilizer",
    "herbicide",
    "livestock",
    "dairy",
    "poultry",
    "fishery",
    "timber",
];

/// Corpus shape. Artifact counts per page are drawn uniformly:
/// sections in [2,4], facts in [5,8], hotspots in [2,4].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    pub docs: usize,
    pub pages_per_doc: usize,
    pub dim: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            docs: 20,
            pages_per_doc: 10,
            dim: 256,
        }
    }
}

/// A generated corpus plus the planted needle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutput {
    /// Page fixtures in document and page order.
    pub pages: Vec<(PageRef, String)>,
    pub planted_page: PageRef,
    pub planted_token: String,
}

impl SynthOutput {
    /// Single-case benchmark: the question is the bare planted token
    /// and the expected answer is the planted fact line.
    pub fn benchmark_jsonl(&self) -> String {
        format!(
            "{}\n",
            serde_json::json!({
                "case_id": "planted-0001",
                "question": self.planted_token,
                "gold_pages": [self.planted_page.to_string()],
                "gold_answer": self.planted_token,
            })
        )
    }

    /// Writes `<root>/corpus/<doc>/<page>.page.txt` files and
    /// `<root>/benchmark.jsonl`.
    pub fn write_tree(&self, root: &Path) -> io::Result<()> {
        for (page, fixture) in &self.pages {
            let dir = root.join(CORPUS_SUBDIR).join(page.doc_id());
            std::fs::create_dir_all(&dir)?;
            let file = dir.join(format!("page_{:03}.page.txt", page.page_no()));
            std::fs::write(file, fixture)?;
        }
        std::fs::write(root.join(BENCHMARK_FILE), self.benchmark_jsonl())
    }
}

fn render_page(rng: &mut ChaCha8Rng) -> String {
    let word = |rng: &mut ChaCha8Rng| VOCAB[rng.random_range(0..VOCAB.len())];
    let number = |rng: &mut ChaCha8Rng| rng.random_range(10u32..=99);
    let mut out = format!(
        "SUMMARY: Report on {} and {} covering {} trends for period {}.\n",
        word(rng),
        word(rng),
        word(rng),
        number(rng)
    );
    for _ in 0..rng.random_range(2..=4) {
        out.push_str(&format!("SECTION: {} {} overview\n", word(rng), word(rng)));
    }
    for _ in 0..rng.random_range(5..=8) {
        out.push_str(&format!(
            "FACT: {} {} {}\n",
            word(rng),
            word(rng),
            number(rng)
        ));
    }
    for _ in 0..rng.random_range(2..=4) {
        out.push_str(&format!("HOTSPOT: {} figure {}\n", word(rng), number(rng)));
    }
    out
}

/// Draws a fresh lowercase token whose hash slot no existing corpus
/// token occupies, so its embedding is orthogonal to every other text.
fn draw_free_token(
    rng: &mut ChaCha8Rng,
    embedder: &HashEmbedder,
    used_slots: &std::collections::BTreeSet<usize>,
    dim: usize,
) -> String {
    assert!(
        used_slots.len() < dim,
        "corpus vocabulary saturates all {dim} hash slots; raise the dimension"
    );
    let stopwords = LexicalExpander::builtin();
    for _ in 0..10_000 {
        let token: String = (0..8)
            .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
            .collect();
        let (slot, _) = embedder.token_slot(&token);
        if !used_slots.contains(&slot) && !stopwords.is_stopword(&token) {
            return token;
        }
    }
    unreachable!("free hash slots exist but none was drawn in 10000 tries");
}

/// Generates a corpus deterministically from the spec. One uniformly
/// chosen page gets the planted token as its first fact line.
pub fn generate(spec: &SynthSpec) -> SynthOutput {
    assert!(spec.docs > 0 && spec.pages_per_doc > 0 && spec.dim > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut pages = Vec::with_capacity(spec.docs * spec.pages_per_doc);
    for doc in 1..=spec.docs {
        let doc_id = format!("doc{doc:02}");
        for page_no in 1..=spec.pages_per_doc {
            let page = PageRef::new(&doc_id, page_no as u32).expect("generated ref is valid");
            pages.push((page, render_page(&mut rng)));
        }
    }

    let embedder = HashEmbedder::new(spec.dim);
    let used_slots: std::collections::BTreeSet<usize> = pages
        .iter()
        .flat_map(|(_, fixture)| text::tokens(fixture))
        .map(|t| embedder.token_slot(&t).0)
        .collect();

    let planted_idx = rng.random_range(0..pages.len());
    let planted_token = draw_free_token(&mut rng, &embedder, &used_slots, spec.dim);

    let (planted_page, fixture) = &mut pages[planted_idx];
    let planted_page = planted_page.clone();
    let mut replaced = false;
    let rewritten: Vec<String> = fixture
        .lines()
        .map(|line| {
            if !replaced && line.starts_with("FACT: ") {
                replaced = true;
                format!("FACT: {planted_token}")
            } else {
                line.to_string()
            }
        })
        .collect();
    assert!(
        replaced,
        "every generated page has at least five fact lines"
    );
    *fixture = format!("{}\n", rewritten.join("\n"));

    SynthOutput {
        pages,
        planted_page,
        planted_token,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pagepyramid_core::protocol::parse_artifacts;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = SynthSpec {
            seed: 7,
            ..SynthSpec::default()
        };
        assert_eq!(generate(&spec), generate(&spec));
        let other = generate(&SynthSpec {
            seed: 8,
            ..SynthSpec::default()
        });
        assert_ne!(generate(&spec), other);
    }

    #[test]
    fn artifact_counts_stay_in_their_ranges() {
        let out = generate(&SynthSpec {
            seed: 3,
            docs: 5,
            pages_per_doc: 4,
            dim: 256,
        });
        assert_eq!(out.pages.len(), 20);
        for (page, fixture) in &out.pages {
            let a = parse_artifacts(fixture).unwrap();
            assert!((2..=4).contains(&a.sections.len()), "sections on {page}");
            assert!((5..=8).contains(&a.facts.len()), "facts on {page}");
            assert!((2..=4).contains(&a.hotspots.len()), "hotspots on {page}");
            assert!((10..=17).contains(&a.vector_budget()), "budget on {page}");
        }
    }

    #[test]
    fn planted_token_is_first_fact_and_hash_isolated() {
        for seed in [1, 2, 3, 4, 5] {
            let spec = SynthSpec {
                seed,
                docs: 8,
                pages_per_doc: 5,
                dim: 256,
            };
            let out = generate(&spec);
            let fixture = &out
                .pages
                .iter()
                .find(|(p, _)| *p == out.planted_page)
                .unwrap()
                .1;
            let artifacts = parse_artifacts(fixture).unwrap();
            assert_eq!(artifacts.facts[0], out.planted_token);

            let embedder = HashEmbedder::new(spec.dim);
            let planted_slot = embedder.token_slot(&out.planted_token).0;
            for (page, text) in &out.pages {
                for token in text::tokens(text) {
                    if token == out.planted_token {
                        assert_eq!(*page, out.planted_page);
                        continue;
                    }
                    assert_ne!(
                        embedder.token_slot(&token).0,
                        planted_slot,
                        "token '{token}' on {page} shares the planted slot"
                    );
                }
            }
        }
    }

    #[test]
    fn written_tree_ingests_and_benchmark_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&SynthSpec {
            seed: 11,
            docs: 3,
            pages_per_doc: 2,
            dim: 256,
        });
        out.write_tree(dir.path()).unwrap();

        let docs = crate::corpus::ingest(&dir.path().join(CORPUS_SUBDIR)).unwrap();
        assert_eq!(docs.len(), 3);
        assert!(docs.iter().all(|d| d.page_count() == 2));

        let cases = crate::corpus::load_benchmark(&dir.path().join(BENCHMARK_FILE), &docs).unwrap();
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].question, out.planted_token);
        assert!(cases[0].gold_pages.contains(&out.planted_page));
        assert_eq!(
            cases[0].gold_answer.as_deref(),
            Some(out.planted_token.as_str())
        );
    }
}
