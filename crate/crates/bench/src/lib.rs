//! Seeded inputs shared by the benchmarks.

use lseh_core::losses::{semantic_factor_matrix, SimilarityBlock, DEFAULT_LAMBDA};
use lseh_core::textsem::TermDocMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random `b × b` similarity block with semantic factors from `k`-dim rows.
pub fn random_block(b: usize, k: usize, seed: u64) -> SimilarityBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Array2::from_shape_fn((b, b), |_| rng.random_range(-1.0..1.0));
    let rows = Array2::from_shape_fn((b, k), |_| rng.random_range(-1.0..1.0));
    SimilarityBlock::new(s, semantic_factor_matrix(rows.view(), DEFAULT_LAMBDA))
        .expect("square block")
}

/// Sparse `n × w` nonnegative matrix with about `density·w` entries per row.
pub fn random_sparse(n: usize, w: usize, density: f64, seed: u64) -> TermDocMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let mut row = Vec::new();
            for j in 0..w {
                if rng.random_bool(density) {
                    row.push((j, rng.random_range(0.1..3.0)));
                }
            }
            row
        })
        .collect();
    TermDocMatrix::from_rows(rows, w).expect("in-range columns")
}
