//! Independent reference implementations used by the integration and
//! acceptance tests. Apart from `gradcheck`, which differentiates the library
//! numerically, nothing here calls into the library's algorithms.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;

pub fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Sum-of-hinges loss by double loop.
pub fn naive_lsh(s: &Array2<f64>, alpha: f64) -> f64 {
    let b = s.nrows();
    let mut total = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i != j {
                total += hinge(alpha + s[[i, j]] - s[[i, i]]);
                total += hinge(alpha + s[[j, i]] - s[[i, i]]);
            }
        }
    }
    total
}

/// Result of a max-of-hinges oracle: value, gradient, and the argmax of every
/// query (lowest index on ties), recorded whether or not its hinge is active.
pub struct MaxHingeOracle {
    pub value: f64,
    pub grad: Array2<f64>,
    pub desc: Vec<Option<usize>>,
    pub img: Vec<Option<usize>>,
}

/// Max-of-hinges with additive per-pair factors (zero factors give LMH).
pub fn naive_max_hinge(s: &Array2<f64>, f: &Array2<f64>, alpha: f64) -> MaxHingeOracle {
    let b = s.nrows();
    let mut grad = Array2::zeros((b, b));
    let mut value = 0.0;
    let mut desc = vec![None; b];
    let mut img = vec![None; b];
    for i in 0..b {
        // image i against descriptions j
        let mut best: Option<(usize, f64)> = None;
        for j in 0..b {
            if j == i {
                continue;
            }
            let h = alpha + s[[i, j]] + f[[i, j]] - s[[i, i]];
            if best.is_none_or(|(_, v)| h > v) {
                best = Some((j, h));
            }
        }
        if let Some((j, h)) = best {
            value += hinge(h);
            desc[i] = Some(j);
            if h > 0.0 {
                grad[[i, j]] += 1.0;
                grad[[i, i]] -= 1.0;
            }
        }
        // description i against images j
        let mut best: Option<(usize, f64)> = None;
        for j in 0..b {
            if j == i {
                continue;
            }
            let h = alpha + s[[j, i]] + f[[j, i]] - s[[i, i]];
            if best.is_none_or(|(_, v)| h > v) {
                best = Some((j, h));
            }
        }
        if let Some((j, h)) = best {
            value += hinge(h);
            img[i] = Some(j);
            if h > 0.0 {
                grad[[j, i]] += 1.0;
                grad[[i, i]] -= 1.0;
            }
        }
    }
    MaxHingeOracle {
        value,
        grad,
        desc,
        img,
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// λ·cos between reduced rows, zero diagonal.
pub fn naive_factors(rows: &Array2<f64>, lambda: f64) -> Array2<f64> {
    let b = rows.nrows();
    let r: Vec<Vec<f64>> = rows.rows().into_iter().map(|r| r.to_vec()).collect();
    Array2::from_shape_fn((b, b), |(i, j)| {
        if i == j {
            0.0
        } else {
            lambda * cosine(&r[i], &r[j])
        }
    })
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Random similarity block with factors from random semantic rows.
pub fn random_block<R: Rng>(rng: &mut R, b: usize, lambda: f64) -> (Array2<f64>, Array2<f64>) {
    let s = random_matrix(rng, b, b, -1.0, 1.0);
    let k = rng.random_range(1..=8);
    let rows = random_matrix(rng, b, k, -1.0, 1.0);
    (s, naive_factors(&rows, lambda))
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted descending.
pub fn symmetric_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        let scale: f64 = (0..n).map(|i| a[[i, i]] * a[[i, i]]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

/// All singular values of `a`, descending, from the eigenvalues of the
/// smaller Gram matrix.
pub fn dense_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let gram = if a.nrows() <= a.ncols() {
        a.dot(&a.t())
    } else {
        a.t().dot(a)
    };
    symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

pub fn frobenius_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Recall@k by fully sorting every query's candidates (descending score,
/// lower index first on ties). `sim` is images × descriptions.
pub fn brute_recall(sim: &Array2<f64>, desc_image: &[usize], k: usize, image_queries: bool) -> f64 {
    let (n_q, n_c) = if image_queries {
        (sim.nrows(), sim.ncols())
    } else {
        (sim.ncols(), sim.nrows())
    };
    let mut hits = 0usize;
    for q in 0..n_q {
        let mut cands: Vec<usize> = (0..n_c).collect();
        let score = |c: usize| if image_queries { sim[[q, c]] } else { sim[[c, q]] };
        cands.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap().then(a.cmp(&b)));
        let relevant = |c: usize| {
            if image_queries {
                desc_image[c] == q
            } else {
                desc_image[q] == c
            }
        };
        if cands.iter().take(k).any(|&c| relevant(c)) {
            hits += 1;
        }
    }
    100.0 * hits as f64 / n_q as f64
}

/// Distinct non-empty entries of an index log.
pub fn set_cardinality(log: &[Option<usize>]) -> usize {
    log.iter().flatten().collect::<BTreeSet<_>>().len()
}
