mod oracles;

use lseh_core::textsem::{build_tfidf, corpus_semantics, truncated_svd, SvdOptions, TermDocMatrix};
use ndarray::{Array2, Axis};
use oracles::{dense_singular_values, frobenius_sq, random_matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sparse_random(rng: &mut ChaCha8Rng, n: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, w), || {
        if rng.random_bool(0.3) {
            rng.random_range(0.0..3.0)
        } else {
            0.0
        }
    })
}

#[test]
fn singular_values_projection_and_residual_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20 {
        let n = rng.random_range(3..=40);
        let w = rng.random_range(3..=80);
        let a = if trial % 2 == 0 {
            random_matrix(&mut rng, n, w, -1.0, 1.0)
        } else {
            sparse_random(&mut rng, n, w)
        };
        let k = rng.random_range(1..n.min(w));
        let sem = truncated_svd(&TermDocMatrix::from_dense(&a), k).unwrap();
        let oracle = dense_singular_values(&a);
        for i in 0..k {
            let rel = (sem.singular_values[i] - oracle[i]).abs() / oracle[i];
            assert!(rel <= 1e-8, "trial {trial} σ{i}: {rel}");
        }
        let b = a.dot(&sem.v);
        let scale = sem.b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in b.iter().zip(sem.b.iter()) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
        let resid = frobenius_sq(&(&a - &sem.reconstruct()));
        let expected = frobenius_sq(&a) - oracle[..k].iter().map(|s| s * s).sum::<f64>();
        assert!((resid - expected).abs() <= 1e-6 * expected.max(1e-12), "trial {trial}");
    }
}

#[test]
fn right_vectors_orthonormal_and_sign_canonical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = sparse_random(&mut rng, 30, 50);
    let sem = truncated_svd(&TermDocMatrix::from_dense(&a), 10).unwrap();
    let gram = sem.v.t().dot(&sem.v);
    for ((i, j), &g) in gram.indexed_iter() {
        let expected = if i == j { 1.0 } else { 0.0 };
        assert!((g - expected).abs() < 1e-10);
    }
    for col in sem.v.axis_iter(Axis(1)) {
        let lead = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(lead > 0.0);
    }
    for w in sem.singular_values.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn row_permutation_permutes_reduced_rows() {
    let docs: Vec<Vec<&str>> = vec![
        vec!["red", "car", "road"],
        vec!["blue", "car"],
        vec!["dog", "park", "grass"],
        vec!["dog", "ball"],
        vec!["red", "ball", "park"],
        vec!["road", "grass", "blue"],
    ];
    let order = [4usize, 2, 0, 5, 1, 3];
    let shuffled: Vec<Vec<&str>> = order.iter().map(|&i| docs[i].clone()).collect();
    let (va, a) = corpus_semantics(&docs, Some(3), &SvdOptions::default()).unwrap();
    let (vb, b) = corpus_semantics(&shuffled, Some(3), &SvdOptions::default()).unwrap();
    assert_eq!(va, vb);
    for (p, &orig) in order.iter().enumerate() {
        for c in 0..3 {
            let x = a.b[[orig, c]];
            let y = b.b[[p, c]];
            assert!((x - y).abs() < 1e-9, "row {orig} col {c}: {x} vs {y}");
        }
    }
    let (_, m) = build_tfidf(&docs).unwrap();
    let (_, m2) = build_tfidf(&shuffled).unwrap();
    assert_eq!(m.select_rows(&order), m2);
}

#[test]
fn deterministic_and_seed_independent_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let a = TermDocMatrix::from_dense(&sparse_random(&mut rng, 25, 40));
    let x = truncated_svd(&a, 6).unwrap();
    let y = truncated_svd(&a, 6).unwrap();
    assert_eq!(x, y);
    let other = lseh_core::textsem::truncated_svd_with(
        &a,
        6,
        &SvdOptions {
            seed: 1,
            ..SvdOptions::default()
        },
    )
    .unwrap();
    for (p, q) in x.singular_values.iter().zip(&other.singular_values) {
        assert!((p - q).abs() <= 1e-9 * x.singular_values[0]);
    }
}
