//! Truncated SVD by randomized subspace iteration.
//!
//! The start basis is a Gaussian sketch of width `k + oversampling`. After a
//! fixed number of power iterations, each further iteration performs a
//! Rayleigh–Ritz step (one-sided Jacobi on the projected matrix) and stops
//! once every wanted Ritz pair satisfies the residual bound.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::textsem::tfidf::TermDocMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdOptions {
    pub oversampling: usize,
    pub power_iterations: usize,
    /// Bound on `max_i ‖AᵀA vᵢ − σᵢ² vᵢ‖ / σ₁²` over the kept triplets.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            oversampling: 8,
            power_iterations: 4,
            tolerance: 1e-11,
            max_iterations: 2000,
            seed: 0x5eed_5eed,
        }
    }
}

/// Reduced description vectors `B = A·V` with the singular values and right
/// singular vectors that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSemantics {
    pub b: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub v: Array2<f64>,
}

impl ReducedSemantics {
    pub fn n_rows(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    /// Rank-k reconstruction `U Λ Vᵀ`, which equals `B Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.b.dot(&self.v.t())
    }

    /// `U = B Λ⁻¹`; columns with a zero singular value are left at zero.
    pub fn left_singular_vectors(&self) -> Array2<f64> {
        let mut u = self.b.clone();
        for (mut col, &sigma) in u.axis_iter_mut(Axis(1)).zip(&self.singular_values) {
            if sigma > 0.0 {
                col /= sigma;
            } else {
                col.fill(0.0);
            }
        }
        u
    }

    /// Copies the listed rows of B, in the given order.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.b.select(Axis(0), indices)
    }
}

/// Default rank for a corpus: `min(400, min(n, w) − 1)`, at least 1.
pub fn default_rank(n_rows: usize, n_cols: usize) -> usize {
    400.min(n_rows.min(n_cols).saturating_sub(1)).max(1)
}

pub fn truncated_svd(a: &TermDocMatrix, k: usize) -> Result<ReducedSemantics> {
    truncated_svd_with(a, k, &SvdOptions::default())
}

pub fn truncated_svd_with(
    a: &TermDocMatrix,
    k: usize,
    opts: &SvdOptions,
) -> Result<ReducedSemantics> {
    let (n, w) = (a.n_rows(), a.n_cols());
    let max_k = n.min(w);
    if k == 0 {
        return Err(Error::KZero);
    }
    if k > max_k {
        return Err(Error::KTooLarge { k, max: max_k });
    }
    let width = (k + opts.oversampling).min(max_k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut z = Array2::from_shape_simple_fn((w, width), || StandardNormal.sample(&mut rng));
    orthonormalize_columns(&mut z, &mut rng);

    let mut last_residual = f64::INFINITY;
    for iter in 0..opts.max_iterations.max(opts.power_iterations + 1) {
        let y = a.mul_dense(&z);
        let g = a.t_mul_dense(&y);
        if iter >= opts.power_iterations || width == max_k {
            let (sigma, rot) = jacobi_svd_columns(&y);
            let order = descending_order(&sigma);
            let rot = rot.select(Axis(1), &order);
            let sigma: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();

            let v = z.dot(&rot);
            let b = y.dot(&rot);
            let atb = g.dot(&rot);
            let scale = sigma[0] * sigma[0];
            let residual = if scale == 0.0 {
                0.0
            } else {
                (0..k)
                    .map(|i| {
                        let s2 = sigma[i] * sigma[i];
                        let r = &atb.column(i) - &(&v.column(i) * s2);
                        r.dot(&r).sqrt()
                    })
                    .fold(0.0, f64::max)
                    / scale
            };
            last_residual = residual;
            if residual <= opts.tolerance {
                log::debug!("truncated SVD converged after {} iterations", iter + 1);
                return Ok(finish(b, v, sigma, k));
            }
        }
        z = g;
        orthonormalize_columns(&mut z, &mut rng);
    }
    Err(Error::ConvergenceFailure {
        iterations: opts.max_iterations,
        residual: last_residual,
    })
}

fn finish(b: Array2<f64>, v: Array2<f64>, sigma: Vec<f64>, k: usize) -> ReducedSemantics {
    let mut b = b.slice(s![.., ..k]).to_owned();
    let mut v = v.slice(s![.., ..k]).to_owned();
    for c in 0..k {
        if leading_entry_is_negative(v.column(c)) {
            v.column_mut(c).mapv_inplace(|x| -x);
            b.column_mut(c).mapv_inplace(|x| -x);
        }
    }
    ReducedSemantics {
        b,
        singular_values: sigma.into_iter().take(k).map(|s| s.max(0.0)).collect(),
        v,
    }
}

/// True when the largest-magnitude entry (lowest index on ties) is negative.
fn leading_entry_is_negative(col: ndarray::ArrayView1<f64>) -> bool {
    let mut best = 0.0f64;
    let mut neg = false;
    for &x in col {
        if x.abs() > best {
            best = x.abs();
            neg = x < 0.0;
        }
    }
    neg
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Modified Gram–Schmidt with one reorthogonalization pass. Columns that
/// collapse (rank deficiency) are replaced by fresh random directions so the
/// result always has orthonormal columns.
pub(crate) fn orthonormalize_columns(m: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (rows, cols) = m.dim();
    debug_assert!(cols <= rows);
    for j in 0..cols {
        let mut attempts = 0;
        loop {
            let before = m.column(j).dot(&m.column(j)).sqrt();
            for _ in 0..2 {
                for p in 0..j {
                    let proj = m.column(p).dot(&m.column(j));
                    let qp = m.column(p).to_owned();
                    m.column_mut(j).scaled_add(-proj, &qp);
                }
            }
            let after = m.column(j).dot(&m.column(j)).sqrt();
            if after > 1e-10 * before && after > f64::MIN_POSITIVE {
                m.column_mut(j).mapv_inplace(|x| x / after);
                break;
            }
            attempts += 1;
            assert!(attempts < 16, "cannot complete orthonormal basis");
            let fresh: Array1<f64> =
                Array1::from_shape_simple_fn(rows, || StandardNormal.sample(&mut *rng));
            m.column_mut(j).assign(&fresh);
        }
    }
}

/// One-sided (Hestenes) Jacobi on the columns of `y`. Returns the column
/// norms after orthogonalization and the accumulated orthogonal rotation `R`,
/// so that `y·R` has mutually orthogonal columns with those norms.
pub(crate) fn jacobi_svd_columns(y: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let l = y.ncols();
    let mut a = y.clone();
    let mut r = Array2::eye(l);
    let eps = 1e-14;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..l {
            for q in p + 1..l {
                let alpha = a.column(p).dot(&a.column(p));
                let beta = a.column(q).dot(&a.column(q));
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate(&mut a, p, q, c, sn);
                rotate(&mut r, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms = a
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .collect();
    (norms, r)
}

fn rotate(m: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let xp = m[[i, p]];
        let xq = m[[i, q]];
        m[[i, p]] = c * xp - s * xq;
        m[[i, q]] = s * xp + c * xq;
    }
}
