//! Corpus discovery and benchmark loading. A corpus root holds one
//! directory per document; each page is one file, ordered by filename.

use std::collections::BTreeSet;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};

use pagepyramid_core::model::PageRef;
use serde::Deserialize;

/// Page raster files; fixture pages carry the double extension below.
pub const FIXTURE_SUFFIX: &str = ".page.txt";
pub const RASTER_SUFFIX: &str = ".png";
pub const DEFAULT_DPI: u32 = 180;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("EmptyCorpus: no document pages under {0}")]
    EmptyCorpus(PathBuf),
    #[error("UnreadablePage: {0}")]
    UnreadablePage(PathBuf),
    #[error("SchemaError: line {line}: {message}")]
    SchemaError { line: usize, message: String },
    #[error("DanglingGoldPage: case '{case_id}' references {page} which is not in the corpus")]
    DanglingGoldPage { case_id: String, page: PageRef },
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
}

/// One ingested document: its id and page files in page-number order,
/// so `pages[i]` backs page number `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentManifest {
    pub doc_id: String,
    pub dpi: u32,
    pub pages: Vec<PathBuf>,
}

impl DocumentManifest {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn page_path(&self, page_no: u32) -> Option<&PathBuf> {
        if page_no == 0 {
            return None;
        }
        self.pages.get(page_no as usize - 1)
    }
}

fn is_page_file(name: &str) -> bool {
    name.ends_with(FIXTURE_SUFFIX) || name.ends_with(RASTER_SUFFIX)
}

/// Scans `<root>/<doc_id>/<page files>`. Documents are ordered by id
/// and pages by filename; page numbers are contiguous from 1.
pub fn ingest(root: &Path) -> Result<Vec<DocumentManifest>, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }
    let mut docs = Vec::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .collect::<io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let doc_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_string)
            .ok_or_else(|| CorpusError::UnreadablePage(dir.clone()))?;
        let mut pages: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(is_page_file)
            })
            .collect();
        pages.sort();
        if pages.is_empty() {
            continue;
        }
        docs.push(DocumentManifest {
            doc_id,
            dpi: DEFAULT_DPI,
            pages,
        });
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(docs)
}

/// Reads one page's raw bytes.
pub fn read_page(manifests: &[DocumentManifest], page: &PageRef) -> Result<Vec<u8>, CorpusError> {
    let path = resolve(manifests, page)
        .ok_or_else(|| CorpusError::UnreadablePage(PathBuf::from(page.to_string())))?;
    std::fs::read(path).map_err(|_| CorpusError::UnreadablePage(path.clone()))
}

/// Maps a page reference to its source file, if the corpus has it.
pub fn resolve<'a>(manifests: &'a [DocumentManifest], page: &PageRef) -> Option<&'a PathBuf> {
    manifests
        .iter()
        .find(|m| m.doc_id == page.doc_id())
        .and_then(|m| m.page_path(page.page_no()))
}

/// One benchmark question with its gold pages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaCase {
    pub case_id: String,
    pub question: String,
    pub gold_pages: BTreeSet<PageRef>,
    pub gold_answer: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    case_id: String,
    question: String,
    gold_pages: Vec<String>,
    #[serde(default)]
    gold_answer: Option<String>,
}

fn parse_gold_page(raw: &str) -> Result<PageRef, String> {
    let (doc, page) = raw
        .rsplit_once('#')
        .ok_or_else(|| format!("gold page '{raw}' is not in doc#page form"))?;
    let page_no: u32 = page
        .parse()
        .map_err(|_| format!("gold page '{raw}' has a non-numeric page number"))?;
    PageRef::new(doc, page_no).map_err(|e| format!("gold page '{raw}': {e}"))
}

/// Loads a JSONL benchmark and checks every gold page against the
/// corpus. Blank lines are skipped; errors carry the 1-based line.
pub fn load_benchmark(
    path: &Path,
    manifests: &[DocumentManifest],
) -> Result<Vec<QaCase>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let mut cases: Vec<QaCase> = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (idx, line) in io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let schema_err = |message: String| CorpusError::SchemaError {
            line: line_no,
            message,
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCase = serde_json::from_str(&line).map_err(|e| schema_err(e.to_string()))?;
        if raw.question.trim().is_empty() {
            return Err(schema_err(format!(
                "case '{}' has an empty question",
                raw.case_id
            )));
        }
        if !seen_ids.insert(raw.case_id.clone()) {
            return Err(schema_err(format!("duplicate case_id '{}'", raw.case_id)));
        }
        if raw.gold_pages.is_empty() {
            return Err(schema_err(format!(
                "case '{}' has no gold pages",
                raw.case_id
            )));
        }
        let mut gold_pages = BTreeSet::new();
        for gp in &raw.gold_pages {
            let page = parse_gold_page(gp).map_err(&schema_err)?;
            if resolve(manifests, &page).is_none() {
                return Err(CorpusError::DanglingGoldPage {
                    case_id: raw.case_id.clone(),
                    page,
                });
            }
            gold_pages.insert(page);
        }
        cases.push(QaCase {
            case_id: raw.case_id,
            question: raw.question,
            gold_pages,
            gold_answer: raw.gold_answer,
        });
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, text).unwrap();
    }

    fn sample_corpus(root: &Path) {
        write(&root.join("beta/page_02.page.txt"), "SUMMARY: b2\n");
        write(&root.join("beta/page_01.page.txt"), "SUMMARY: b1\n");
        write(&root.join("alpha/only.page.txt"), "SUMMARY: a1\n");
        write(&root.join("alpha/notes.md"), "ignored");
        std::fs::create_dir_all(root.join("empty-doc")).unwrap();
    }

    #[test]
    fn ingest_orders_documents_and_pages_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        sample_corpus(dir.path());
        let docs = ingest(dir.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "alpha");
        assert_eq!(docs[0].page_count(), 1);
        assert_eq!(docs[1].doc_id, "beta");
        let names: Vec<_> = docs[1]
            .pages
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["page_01.page.txt", "page_02.page.txt"]);
        assert_eq!(
            docs[1].page_path(2).unwrap().file_name().unwrap(),
            "page_02.page.txt"
        );
        assert!(docs[1].page_path(0).is_none());
        assert!(docs[1].page_path(3).is_none());
    }

    #[test]
    fn ingest_rejects_missing_or_pageless_roots() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest(&dir.path().join("nope")).unwrap_err(),
            CorpusError::EmptyCorpus(_)
        ));
        std::fs::create_dir_all(dir.path().join("doc/sub")).unwrap();
        write(&dir.path().join("doc/readme.txt"), "not a page");
        assert!(matches!(
            ingest(dir.path()).unwrap_err(),
            CorpusError::EmptyCorpus(_)
        ));
    }

    #[test]
    fn read_page_round_trips_and_flags_missing_pages() {
        let dir = tempfile::tempdir().unwrap();
        sample_corpus(dir.path());
        let docs = ingest(dir.path()).unwrap();
        let bytes = read_page(&docs, &PageRef::new("beta", 2).unwrap()).unwrap();
        assert_eq!(bytes, b"SUMMARY: b2\n");
        assert!(matches!(
            read_page(&docs, &PageRef::new("beta", 9).unwrap()).unwrap_err(),
            CorpusError::UnreadablePage(_)
        ));
    }

    #[test]
    fn benchmark_happy_path_parses_pages_and_optional_answers() {
        let dir = tempfile::tempdir().unwrap();
        sample_corpus(dir.path());
        let docs = ingest(dir.path()).unwrap();
        let bench = dir.path().join("bench.jsonl");
        write(
            &bench,
            concat!(
                r#"{"case_id":"c1","question":"Q one?","gold_pages":["beta#2","alpha#1"],"gold_answer":"42"}"#,
                "\n\n",
                r#"{"case_id":"c2","question":"Q two?","gold_pages":["beta#1"]}"#,
                "\n",
            ),
        );
        let cases = load_benchmark(&bench, &docs).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].gold_pages.len(), 2);
        assert_eq!(cases[0].gold_answer.as_deref(), Some("42"));
        assert_eq!(cases[1].gold_answer, None);
    }

    #[test]
    fn benchmark_schema_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        sample_corpus(dir.path());
        let docs = ingest(dir.path()).unwrap();
        let bench = dir.path().join("bench.jsonl");

        write(&bench, "{\"case_id\":\"c1\"}\n");
        assert!(matches!(
            load_benchmark(&bench, &docs).unwrap_err(),
            CorpusError::SchemaError { line: 1, .. }
        ));

        write(
            &bench,
            concat!(
                r#"{"case_id":"c1","question":"q","gold_pages":["alpha#1"]}"#,
                "\n",
                r#"{"case_id":"c1","question":"q","gold_pages":["alpha#1"]}"#,
                "\n",
            ),
        );
        assert!(matches!(
            load_benchmark(&bench, &docs).unwrap_err(),
            CorpusError::SchemaError { line: 2, .. }
        ));

        write(
            &bench,
            "{\"case_id\":\"c1\",\"question\":\"q\",\"gold_pages\":[]}\n",
        );
        assert!(matches!(
            load_benchmark(&bench, &docs).unwrap_err(),
            CorpusError::SchemaError { line: 1, .. }
        ));

        write(
            &bench,
            "{\"case_id\":\"c1\",\"question\":\"q\",\"gold_pages\":[\"alpha-1\"]}\n",
        );
        assert!(matches!(
            load_benchmark(&bench, &docs).unwrap_err(),
            CorpusError::SchemaError { line: 1, .. }
        ));
    }

    #[test]
    fn benchmark_rejects_gold_pages_outside_the_corpus() {
        let dir = tempfile::tempdir().unwrap();
        sample_corpus(dir.path());
        let docs = ingest(dir.path()).unwrap();
        let bench = dir.path().join("bench.jsonl");
        write(
            &bench,
            "{\"case_id\":\"c1\",\"question\":\"q\",\"gold_pages\":[\"beta#3\"]}\n",
        );
        match load_benchmark(&bench, &docs).unwrap_err() {
            CorpusError::DanglingGoldPage { case_id, page } => {
                assert_eq!(case_id, "c1");
                assert_eq!(page.to_string(), "beta#3");
            }
            other => panic!("expected DanglingGoldPage, got {other}"),
        }
    }
}
