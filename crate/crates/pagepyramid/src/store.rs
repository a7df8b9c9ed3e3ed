//! On-disk index layout: a manifest with checksums, one JSONL file of
//! record metadata, and one little-endian f32 blob per vector set.
//! Loading an index back yields bit-identical vectors, so search
//! results survive a save/load round trip exactly.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use pagepyramid_core::model::{EmbeddingVector, IndexKind, PageRef, VectorRecord};
use pagepyramid_core::pyramid::{BuildMeta, PyramidIndex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
    #[error("FormatVersionMismatch: {0}")]
    FormatVersionMismatch(String),
    #[error("ChecksumMismatch: {file} does not match its recorded digest")]
    ChecksumMismatch { file: String },
    #[error("CorruptStore: {0}")]
    Corrupt(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    format_version: u32,
    dim: usize,
    embedder_model: String,
    built_at_unix: u64,
    page_count: usize,
    counts: BTreeMap<String, usize>,
    checksums: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    kind: IndexKind,
    doc: String,
    page: u32,
    ordinal: u32,
    text: String,
}

fn blob_file(kind: IndexKind) -> String {
    format!("vectors_{}.bin", kind.file_stem())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the index into `dir`, creating it if needed. The manifest is
/// written last so a complete manifest implies complete data files.
pub fn save(index: &PyramidIndex, dir: &Path) -> Result<(), StoreError> {
    std::fs::create_dir_all(dir)?;

    let mut records_jsonl = Vec::new();
    let mut checksums = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for kind in IndexKind::ALL {
        let records = index.records_of(kind);
        counts.insert(kind.label().to_string(), records.len());

        let mut blob = Vec::with_capacity(records.len() * index.dim() * 4);
        for record in records {
            let row = RecordRow {
                kind,
                doc: record.page.doc_id().to_string(),
                page: record.page.page_no(),
                ordinal: record.ordinal,
                text: record.source_text.clone(),
            };
            serde_json::to_writer(&mut records_jsonl, &row)
                .map_err(|e| StoreError::Corrupt(e.to_string()))?;
            records_jsonl.push(b'\n');
            for v in record.vector.values() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let file = blob_file(kind);
        checksums.insert(file.clone(), sha256_hex(&blob));
        std::fs::write(dir.join(file), blob)?;
    }
    checksums.insert(RECORDS_FILE.to_string(), sha256_hex(&records_jsonl));
    std::fs::write(dir.join(RECORDS_FILE), records_jsonl)?;

    let manifest = StoreManifest {
        format_version: FORMAT_VERSION,
        dim: index.dim(),
        embedder_model: index.meta().embedder_model.clone(),
        built_at_unix: index.meta().built_at_unix,
        page_count: index.page_count(),
        counts,
        checksums,
    };
    let mut out =
        serde_json::to_vec_pretty(&manifest).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    out.push(b'\n');
    let mut f = std::fs::File::create(dir.join(MANIFEST_FILE))?;
    f.write_all(&out)?;
    Ok(())
}

/// Reads an index back, verifying the format version and every file
/// checksum before reconstructing the vector sets.
pub fn load(dir: &Path) -> Result<PyramidIndex, StoreError> {
    let manifest_bytes = std::fs::read(dir.join(MANIFEST_FILE))?;
    let manifest: StoreManifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| StoreError::Corrupt(format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::FormatVersionMismatch(format!(
            "found version {}, expected {FORMAT_VERSION}",
            manifest.format_version
        )));
    }
    if manifest.dim == 0 {
        return Err(StoreError::FormatVersionMismatch(
            "dimension is zero".into(),
        ));
    }

    let mut contents: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for (file, digest) in &manifest.checksums {
        let bytes = std::fs::read(dir.join(file))?;
        if &sha256_hex(&bytes) != digest {
            return Err(StoreError::ChecksumMismatch { file: file.clone() });
        }
        contents.insert(file.clone(), bytes);
    }

    let records_jsonl = contents
        .get(RECORDS_FILE)
        .ok_or_else(|| StoreError::Corrupt("manifest lists no record file".into()))?;
    let mut rows_by_kind: BTreeMap<IndexKind, Vec<RecordRow>> = BTreeMap::new();
    for (idx, line) in std::str::from_utf8(records_jsonl)
        .map_err(|_| StoreError::Corrupt("record file is not UTF-8".into()))?
        .lines()
        .enumerate()
    {
        let row: RecordRow = serde_json::from_str(line)
            .map_err(|e| StoreError::Corrupt(format!("record line {}: {e}", idx + 1)))?;
        rows_by_kind.entry(row.kind).or_default().push(row);
    }

    let mut records = Vec::new();
    for kind in IndexKind::ALL {
        let rows = rows_by_kind.remove(&kind).unwrap_or_default();
        let file = blob_file(kind);
        let blob = contents.get(&file).cloned().unwrap_or_default();
        let expected = rows.len() * manifest.dim * 4;
        if blob.len() != expected {
            return Err(StoreError::FormatVersionMismatch(format!(
                "{file} holds {} bytes but {} records of dimension {} need {expected}",
                blob.len(),
                rows.len(),
                manifest.dim
            )));
        }
        for (i, row) in rows.into_iter().enumerate() {
            let start = i * manifest.dim * 4;
            let values: Vec<f32> = blob[start..start + manifest.dim * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let vector = EmbeddingVector::from_unit(values)
                .map_err(|e| StoreError::Corrupt(format!("stored vector: {e}")))?;
            let page = PageRef::new(&row.doc, row.page)
                .map_err(|e| StoreError::Corrupt(format!("stored page ref: {e}")))?;
            records.push(VectorRecord {
                kind,
                page,
                ordinal: row.ordinal,
                vector,
                source_text: row.text,
            });
        }
    }

    let meta = BuildMeta {
        embedder_model: manifest.embedder_model,
        built_at_unix: manifest.built_at_unix,
    };
    let mut index = PyramidIndex::new(manifest.dim, meta);
    index
        .add_records(records)
        .map_err(|e| StoreError::Corrupt(e.to_string()))?;
    index
        .validate()
        .map_err(|e| StoreError::Corrupt(e.to_string()))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pagepyramid_core::embed::{Embedder, HashEmbedder};
    use pagepyramid_core::model::PageArtifacts;

    fn sample_index(dim: usize) -> PyramidIndex {
        let embedder = HashEmbedder::new(dim);
        let meta = BuildMeta {
            embedder_model: "mock".into(),
            built_at_unix: 1_700_000_000,
        };
        let mut index = PyramidIndex::new(dim, meta);
        for (doc, page_no, topic) in [
            ("alpha", 1, "revenue"),
            ("alpha", 2, "debt"),
            ("beta", 1, "cash"),
        ] {
            let page = PageRef::new(doc, page_no).unwrap();
            let artifacts = PageArtifacts::new(
                format!("{topic} overview"),
                vec![format!("{topic} details"), "appendix".into()],
                vec![format!("{topic} was 42"), format!("{topic} grew")],
                vec![format!("{topic} chart")],
            )
            .unwrap();
            index.insert_page(&page, &artifacts, &embedder).unwrap();
        }
        index.validate().unwrap();
        index
    }

    #[test]
    fn round_trip_preserves_records_and_search_bits() {
        let dir = tempfile::tempdir().unwrap();
        let index = sample_index(32);
        save(&index, dir.path()).unwrap();
        let loaded = load(dir.path()).unwrap();

        assert_eq!(loaded.dim(), index.dim());
        assert_eq!(loaded.meta(), index.meta());
        assert_eq!(loaded.page_count(), index.page_count());
        for kind in IndexKind::ALL {
            assert_eq!(loaded.records_of(kind), index.records_of(kind));
        }

        let embedder = HashEmbedder::new(32);
        let query = embedder.embed("revenue details").unwrap();
        for kind in IndexKind::ALL {
            let a = index.search(kind, &query, 5).unwrap();
            let b = loaded.search(kind, &query, 5).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.record, y.record);
                assert_eq!(x.score.to_bits(), y.score.to_bits());
            }
        }
    }

    #[test]
    fn saving_twice_produces_identical_bytes() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let index = sample_index(32);
        save(&index, d1.path()).unwrap();
        save(&index, d2.path()).unwrap();
        for file in [MANIFEST_FILE, RECORDS_FILE, "vectors_fact.bin"] {
            assert_eq!(
                std::fs::read(d1.path().join(file)).unwrap(),
                std::fs::read(d2.path().join(file)).unwrap(),
                "{file} differs between identical saves"
            );
        }
    }

    #[test]
    fn truncated_blob_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        save(&sample_index(32), dir.path()).unwrap();
        let blob = dir.path().join("vectors_section.bin");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load(dir.path()).unwrap_err(),
            StoreError::ChecksumMismatch { file } if file == "vectors_section.bin"
        ));
    }

    #[test]
    fn version_and_dimension_disagreements_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save(&sample_index(32), dir.path()).unwrap();
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let original = std::fs::read_to_string(&manifest_path).unwrap();

        std::fs::write(
            &manifest_path,
            original.replace("\"format_version\": 1", "\"format_version\": 9"),
        )
        .unwrap();
        assert!(matches!(
            load(dir.path()).unwrap_err(),
            StoreError::FormatVersionMismatch(_)
        ));

        std::fs::write(
            &manifest_path,
            original.replace("\"dim\": 32", "\"dim\": 64"),
        )
        .unwrap();
        assert!(matches!(
            load(dir.path()).unwrap_err(),
            StoreError::FormatVersionMismatch(_)
        ));
    }

    #[test]
    fn stray_files_in_the_directory_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let index = sample_index(32);
        save(&index, dir.path()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "unrelated").unwrap();
        let loaded = load(dir.path()).unwrap();
        assert_eq!(loaded.total_vectors(), index.total_vectors());
    }
}
