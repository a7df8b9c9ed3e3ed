//! Late-interaction baseline: MaxSim over patch grids, patch pooling,
//! and the analytic memory/compute model the comparison tables use.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::model::{normalize, EmbeddingVector};

/// Patch embedding width of the reference late-interaction model.
pub const DEFAULT_PATCH_DIM: usize = 128;

/// Corpus sizes the scaling table reports.
pub const SCALING_PAGE_COUNTS: [u64; 4] = [100, 1_000, 10_000, 1_000_000];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LateError {
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("EmptyQuery: need at least one query vector")]
    EmptyQuery,
    #[error("InvalidFactor: pooling factor must be at least 1")]
    InvalidFactor,
    #[error("invalid grid: {0}")]
    InvalidShape(String),
    #[error("pooled block cancelled to a zero vector")]
    Degenerate,
}

/// A page as a dense grid of unit patch vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    vectors: Vec<EmbeddingVector>,
}

impl PatchGrid {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self, LateError> {
        if grid_h == 0 || grid_w == 0 {
            return Err(LateError::InvalidShape(
                "grid sides must be positive".into(),
            ));
        }
        if vectors.len() != grid_h * grid_w {
            return Err(LateError::InvalidShape(format!(
                "expected {} vectors for a {grid_h}x{grid_w} grid, got {}",
                grid_h * grid_w,
                vectors.len()
            )));
        }
        let dim = vectors[0].dim();
        for v in &vectors {
            if v.dim() != dim {
                return Err(LateError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        Ok(Self {
            grid_h,
            grid_w,
            dim,
            vectors,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    fn at(&self, row: usize, col: usize) -> &EmbeddingVector {
        &self.vectors[row * self.grid_w + col]
    }
}

/// Sum over query tokens of the best patch dot product, exact and
/// exhaustive.
pub fn maxsim_score(query: &[EmbeddingVector], page: &PatchGrid) -> Result<f64, LateError> {
    if query.is_empty() {
        return Err(LateError::EmptyQuery);
    }
    for q in query {
        if q.dim() != page.dim() {
            return Err(LateError::DimensionMismatch {
                expected: page.dim(),
                got: q.dim(),
            });
        }
    }
    let mut total = 0.0f64;
    for q in query {
        let mut best = f64::NEG_INFINITY;
        for p in page.vectors() {
            let s = math::dot(q.values(), p.values());
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    Ok(total)
}

/// How pooled windows are laid out over the patch sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// Non-overlapping factor x factor blocks; edges pad by replicating
    /// the last row/column. Output is ceil(h/f) x ceil(w/f).
    Block2D,
    /// Row-major windows of `factor` vectors, last window may be short.
    /// Output is 1 x ceil(len/f).
    Seq1D,
}

/// Mean-pools patches then renormalizes each pooled vector.
pub fn pool_patches(
    page: &PatchGrid,
    factor: usize,
    mode: PoolMode,
) -> Result<PatchGrid, LateError> {
    if factor == 0 {
        return Err(LateError::InvalidFactor);
    }
    if factor == 1 {
        return Ok(page.clone());
    }
    let dim = page.dim();
    let mean_normalized = |group: &[&EmbeddingVector]| -> Result<EmbeddingVector, LateError> {
        let mut acc = alloc::vec![0.0f32; dim];
        for v in group {
            for (a, x) in acc.iter_mut().zip(v.values()) {
                *a += x;
            }
        }
        let inv = 1.0 / group.len() as f32;
        for a in &mut acc {
            *a *= inv;
        }
        normalize(&acc).map_err(|_| LateError::Degenerate)
    };

    match mode {
        PoolMode::Block2D => {
            let out_h = page.grid_h.div_ceil(factor);
            let out_w = page.grid_w.div_ceil(factor);
            let mut vectors = Vec::with_capacity(out_h * out_w);
            for bi in 0..out_h {
                for bj in 0..out_w {
                    let mut group = Vec::with_capacity(factor * factor);
                    for di in 0..factor {
                        for dj in 0..factor {
                            let row = (bi * factor + di).min(page.grid_h - 1);
                            let col = (bj * factor + dj).min(page.grid_w - 1);
                            group.push(page.at(row, col));
                        }
                    }
                    vectors.push(mean_normalized(&group)?);
                }
            }
            PatchGrid::new(out_h, out_w, vectors)
        }
        PoolMode::Seq1D => {
            let mut vectors = Vec::with_capacity(page.len().div_ceil(factor));
            for window in page.vectors().chunks(factor) {
                let group: Vec<&EmbeddingVector> = window.iter().collect();
                vectors.push(mean_normalized(&group)?);
            }
            PatchGrid::new(1, page.len().div_ceil(factor), vectors)
        }
    }
}

/// Per-page storage parameters for the analytic memory model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostSpec {
    pub vectors_per_page: u64,
    pub dim: u64,
    pub bytes_per_scalar: u64,
}

impl CostSpec {
    pub fn new(vectors_per_page: u64, dim: u64, bytes_per_scalar: u64) -> Self {
        assert!(
            vectors_per_page > 0 && dim > 0 && bytes_per_scalar > 0,
            "cost spec fields must be positive"
        );
        Self {
            vectors_per_page,
            dim,
            bytes_per_scalar,
        }
    }
}

/// Bytes to store one page's vectors.
pub fn memory_bytes(spec: &CostSpec) -> u64 {
    spec.vectors_per_page * spec.dim * spec.bytes_per_scalar
}

/// Bytes to store a whole corpus.
pub fn corpus_memory(spec: &CostSpec, pages: u64) -> u64 {
    assert!(pages >= 1, "corpus must have at least one page");
    pages * memory_bytes(spec)
}

/// Multiply-accumulate count for one MaxSim evaluation.
pub fn maxsim_macs(q_len: u64, patches: u64, dim: u64) -> u64 {
    assert!(q_len > 0 && patches > 0 && dim > 0);
    q_len * patches * dim
}

/// Deterministic pseudo-random grid of unit vectors.
pub fn synth_grid(seed: u64, grid_h: usize, grid_w: usize, dim: usize) -> PatchGrid {
    assert!(
        grid_h > 0 && grid_w > 0 && dim > 0,
        "grid dims must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..grid_h * grid_w)
        .map(|_| random_unit(&mut rng, dim))
        .collect();
    PatchGrid::new(grid_h, grid_w, vectors).expect("shape is consistent by construction")
}

/// Deterministic random unit vector from a seeded generator.
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
        if let Ok(u) = normalize(&v) {
            return u;
        }
    }
}

/// One row of the per-page storage comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BudgetRow {
    pub label: String,
    pub vectors_per_page: u64,
    pub dim: u64,
    pub per_page_bytes: u64,
    pub per_page_display: String,
    pub efficiency: String,
}

/// One row of the corpus scaling comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingRow {
    pub label: String,
    pub per_page_bytes: u64,
    /// (pages, total bytes, rounded display) per corpus size.
    pub cells: Vec<(u64, u64, String)>,
}

/// The five storage configurations the comparison tables cover: the
/// dense patch baseline (full and pooled) and the page pyramid at three
/// embedding widths. All figures assume 2-byte scalars.
pub fn standard_specs() -> Vec<(String, CostSpec)> {
    [
        ("patch grid, full (d=128)", 1024u64, 128u64),
        ("patch grid, pooled (d=128)", 341, 128),
        ("page pyramid (d=1024)", 14, 1024),
        ("page pyramid (d=1536)", 14, 1536),
        ("page pyramid (d=3072)", 14, 3072),
    ]
    .into_iter()
    .map(|(label, vectors, dim)| (label.to_string(), CostSpec::new(vectors, dim, 2)))
    .collect()
}

/// Per-page storage for every standard configuration, with the size of
/// the first row as the efficiency baseline.
pub fn per_page_budget_table() -> Vec<BudgetRow> {
    let specs = standard_specs();
    let baseline = memory_bytes(&specs[0].1) as f64;
    specs
        .into_iter()
        .enumerate()
        .map(|(i, (label, spec))| {
            let bytes = memory_bytes(&spec);
            let efficiency = if i == 0 {
                "baseline".to_string()
            } else {
                format!("{:.1}x smaller", baseline / bytes as f64)
            };
            BudgetRow {
                label,
                vectors_per_page: spec.vectors_per_page,
                dim: spec.dim,
                per_page_bytes: bytes,
                per_page_display: format!("{} KB", format_kb_one_decimal(bytes)),
                efficiency,
            }
        })
        .collect()
}

/// Total storage for every standard configuration at each corpus size.
pub fn corpus_scaling_table(page_counts: &[u64]) -> Vec<ScalingRow> {
    standard_specs()
        .into_iter()
        .map(|(label, spec)| ScalingRow {
            label,
            per_page_bytes: memory_bytes(&spec),
            cells: page_counts
                .iter()
                .map(|pages| {
                    let bytes = corpus_memory(&spec, *pages);
                    (*pages, bytes, format_scaled(bytes))
                })
                .collect(),
        })
        .collect()
}

/// Kilobytes (1024 B) with one decimal, e.g. 262144 -> "256.0".
pub fn format_kb_one_decimal(bytes: u64) -> String {
    format!("{:.1}", bytes as f64 / 1024.0)
}

/// Human-scale size at two significant figures. Kilo and mega steps are
/// 1024; the gigabyte step is 1000 megabytes, matching how storage
/// sizes are conventionally quoted.
pub fn format_scaled(bytes: u64) -> String {
    const KB: f64 = 1024.0;
    const MB: f64 = 1024.0 * 1024.0;
    let b = bytes as f64;
    let mb = b / MB;
    if mb >= 1000.0 {
        format!("{} GB", sig2(mb / 1000.0))
    } else if mb >= 1.0 {
        format!("{} MB", sig2(mb))
    } else if b >= KB {
        format!("{} KB", sig2(b / KB))
    } else {
        format!("{bytes} B")
    }
}

/// Rounds a positive value to two significant figures.
fn sig2(v: f64) -> String {
    debug_assert!(v > 0.0);
    let mut p = 1.0f64;
    while v / p >= 100.0 {
        p *= 10.0;
    }
    while v / p < 10.0 {
        p /= 10.0;
    }
    let r = math::round(v / p) * p;
    if r < 10.0 {
        format!("{r:.1}")
    } else {
        format!("{r:.0}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn basis(dim: usize, axis: usize) -> EmbeddingVector {
        let mut v = vec![0.0f32; dim];
        v[axis] = 1.0;
        EmbeddingVector::from_unit(v).unwrap()
    }

    #[test]
    fn exact_match_scores_one_per_token() {
        let grid = PatchGrid::new(2, 2, (0..4).map(|i| basis(8, i)).collect()).unwrap();
        let one = maxsim_score(&[basis(8, 2)], &grid).unwrap();
        assert!((one - 1.0).abs() <= 1e-6);

        let three = maxsim_score(&[basis(8, 0), basis(8, 1), basis(8, 3)], &grid).unwrap();
        assert!((three - 3.0).abs() <= 1e-6);
    }

    #[test]
    fn rejects_empty_query_and_dim_mismatch() {
        let grid = synth_grid(1, 2, 2, 16);
        assert_eq!(maxsim_score(&[], &grid).unwrap_err(), LateError::EmptyQuery);
        let wrong = basis(8, 0);
        assert!(matches!(
            maxsim_score(&[wrong], &grid).unwrap_err(),
            LateError::DimensionMismatch {
                expected: 16,
                got: 8
            }
        ));
    }

    #[test]
    fn matches_patch_major_oracle() {
        // Oracle iterates patches in the outer loop and keeps a running
        // best per token, the transpose of the implementation's order.
        let grid = synth_grid(42, 8, 8, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let query: Vec<EmbeddingVector> = (0..20).map(|_| random_unit(&mut rng, 32)).collect();

        let mut best = vec![f64::NEG_INFINITY; query.len()];
        for p in grid.vectors() {
            for (t, q) in query.iter().enumerate() {
                let s = math::dot(q.values(), p.values());
                if s > best[t] {
                    best[t] = s;
                }
            }
        }
        let expect: f64 = best.iter().sum();

        let got = maxsim_score(&query, &grid).unwrap();
        assert!((got - expect).abs() <= 1e-6);
        assert!(got.abs() <= query.len() as f64 + 1e-9);
    }

    #[test]
    fn patch_permutation_does_not_change_the_score() {
        let grid = synth_grid(7, 4, 4, 16);
        let mut reversed_vecs: Vec<EmbeddingVector> = grid.vectors().to_vec();
        reversed_vecs.reverse();
        let reversed = PatchGrid::new(4, 4, reversed_vecs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let query: Vec<EmbeddingVector> = (0..5).map(|_| random_unit(&mut rng, 16)).collect();
        assert_eq!(
            maxsim_score(&query, &grid).unwrap(),
            maxsim_score(&query, &reversed).unwrap()
        );
    }

    #[test]
    fn pooling_counts_match_ceiling_arithmetic() {
        let grid = synth_grid(3, 32, 32, 8);
        let block = pool_patches(&grid, 3, PoolMode::Block2D).unwrap();
        assert_eq!((block.grid_h(), block.grid_w(), block.len()), (11, 11, 121));

        let seq = pool_patches(&grid, 3, PoolMode::Seq1D).unwrap();
        assert_eq!((seq.grid_h(), seq.grid_w(), seq.len()), (1, 342, 342));

        for v in block.vectors().iter().chain(seq.vectors()) {
            assert!((math::l2_norm(v.values()) - 1.0).abs() <= 1e-6);
        }

        assert_eq!(pool_patches(&grid, 1, PoolMode::Block2D).unwrap(), grid);
        assert_eq!(
            pool_patches(&grid, 0, PoolMode::Seq1D).unwrap_err(),
            LateError::InvalidFactor
        );
    }

    #[test]
    fn block_pooling_replicates_edges() {
        // 3x3 grid of distinct axes, factor 2. The bottom-right block
        // covers only the corner patch (replicated 4 times), so its
        // pooled vector is that patch unchanged.
        let grid = PatchGrid::new(3, 3, (0..9).map(|i| basis(9, i)).collect()).unwrap();
        let pooled = pool_patches(&grid, 2, PoolMode::Block2D).unwrap();
        assert_eq!((pooled.grid_h(), pooled.grid_w()), (2, 2));
        assert_eq!(pooled.at(1, 1), &basis(9, 8));

        // Interior block: mean of four distinct axes renormalizes to
        // 0.5 on each.
        let top_left = pooled.at(0, 0);
        for axis in [0, 1, 3, 4] {
            assert!((top_left.values()[axis] - 0.5).abs() <= 1e-6);
        }
    }

    #[test]
    fn seq_pooling_keeps_a_short_tail() {
        let grid = PatchGrid::new(1, 5, (0..5).map(|i| basis(8, i)).collect()).unwrap();
        let pooled = pool_patches(&grid, 2, PoolMode::Seq1D).unwrap();
        assert_eq!(pooled.len(), 3);
        assert_eq!(pooled.at(0, 2), &basis(8, 4));
    }

    #[test]
    fn memory_model_golden_values() {
        assert_eq!(memory_bytes(&CostSpec::new(1024, 128, 2)), 262_144);
        assert_eq!(memory_bytes(&CostSpec::new(341, 128, 2)), 87_296);
        assert_eq!(memory_bytes(&CostSpec::new(14, 1536, 2)), 43_008);

        let full = CostSpec::new(1024, 128, 2);
        assert_eq!(corpus_memory(&full, 10_000), 2_621_440_000);
        assert_eq!(corpus_memory(&full, 1), memory_bytes(&full));
        assert_eq!(
            corpus_memory(&CostSpec::new(14, 1536, 2), 1_000_000),
            43_008_000_000
        );
    }

    #[test]
    fn mac_counts() {
        assert_eq!(maxsim_macs(20, 1024, 128), 2_621_440);
        assert_eq!(maxsim_macs(1, 1, 1), 1);
        assert_eq!(maxsim_macs(20, 342, 128), 875_520);
    }

    #[test]
    fn synth_grids_are_seed_deterministic() {
        let a = synth_grid(5, 32, 32, 128);
        let b = synth_grid(5, 32, 32, 128);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1024);
        for v in a.vectors() {
            assert!((math::l2_norm(v.values()) - 1.0).abs() <= 1e-6);
        }
        let c = synth_grid(6, 32, 32, 128);
        assert_ne!(a, c);
    }

    #[test]
    fn per_page_table_matches_published_figures() {
        let rows = per_page_budget_table();
        let got: Vec<(u64, &str, &str)> = rows
            .iter()
            .map(|r| {
                (
                    r.per_page_bytes,
                    r.per_page_display.as_str(),
                    r.efficiency.as_str(),
                )
            })
            .collect();
        assert_eq!(
            got,
            vec![
                (262_144, "256.0 KB", "baseline"),
                (87_296, "85.2 KB", "3.0x smaller"),
                (28_672, "28.0 KB", "9.1x smaller"),
                (43_008, "42.0 KB", "6.1x smaller"),
                (86_016, "84.0 KB", "3.0x smaller"),
            ]
        );
    }

    #[test]
    fn scaling_table_matches_published_figures() {
        let rows = corpus_scaling_table(&SCALING_PAGE_COUNTS);
        let display: Vec<Vec<&str>> = rows
            .iter()
            .map(|r| r.cells.iter().map(|(_, _, d)| d.as_str()).collect())
            .collect();
        assert_eq!(
            display,
            vec![
                vec!["25 MB", "250 MB", "2.5 GB", "250 GB"],
                vec!["8.3 MB", "83 MB", "830 MB", "83 GB"],
                vec!["2.7 MB", "27 MB", "270 MB", "27 GB"],
                vec!["4.1 MB", "41 MB", "410 MB", "41 GB"],
                vec!["8.2 MB", "82 MB", "820 MB", "82 GB"],
            ]
        );
        assert_eq!(rows[0].cells[2].1, 2_621_440_000);
        assert_eq!(rows[3].cells[3].1, 43_008_000_000);
    }

    #[test]
    fn small_sizes_fall_back_to_bytes_and_kilobytes() {
        assert_eq!(format_scaled(512), "512 B");
        // Two significant figures: 256 KB rounds to 260.
        assert_eq!(format_scaled(262_144), "260 KB");
        assert_eq!(format_kb_one_decimal(262_144), "256.0");
        assert_eq!(format_kb_one_decimal(87_296), "85.2");
    }
}
