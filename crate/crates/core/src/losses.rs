//! Hinge-based ranking losses over a batch similarity matrix.
//!
//! `S[i][j]` is the similarity of image `i` with description `j`; the diagonal
//! holds relevant pairs. Every loss is summed over the batch:
//!
//! * LSH sums the hinge `[α + S[i][j] − S[i][i]]₊` over all irrelevant `j`,
//!   in both retrieval directions.
//! * LMH keeps only the largest hinge per query and direction (the hard negative).
//! * LSEH adds a semantic factor `F[i][j]` to every irrelevant score before
//!   taking the maximum, so the hard negative is the argmax of `S + F`.
//!
//! Gradients are taken with respect to `S`; `F` is constant. At a hinge kink
//! the subgradient 0 is used, and argmax ties resolve to the lowest index.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::textsem::cosine;

pub const DEFAULT_ALPHA: f64 = 0.185;
pub const DEFAULT_LAMBDA: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    Lsh,
    Lmh,
    Lseh,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Lsh => "lsh",
            LossVariant::Lmh => "lmh",
            LossVariant::Lseh => "lseh",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsh" => Ok(LossVariant::Lsh),
            "lmh" => Ok(LossVariant::Lmh),
            "lseh" => Ok(LossVariant::Lseh),
            other => Err(Error::InvalidConfig(format!("unknown loss variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Margin.
    pub alpha: f64,
    /// Semantic-factor temperature; bounds |F|.
    pub lambda: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
            variant: LossVariant::Lseh,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// True when the loss consumes semantic factors.
    pub fn uses_semantics(&self) -> bool {
        self.variant == LossVariant::Lseh
    }
}

/// Batch similarity matrix together with the matching semantic factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    s: Array2<f64>,
    f: Array2<f64>,
}

impl SimilarityBlock {
    /// Requires square matrices of equal shape, `F` symmetric with a zero diagonal.
    pub fn new(s: Array2<f64>, f: Array2<f64>) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::shape(format!("similarity matrix is {:?}", s.dim())));
        }
        if s.dim() != f.dim() {
            return Err(Error::shape(format!(
                "similarity {:?} vs factors {:?}",
                s.dim(),
                f.dim()
            )));
        }
        let b = s.nrows();
        for i in 0..b {
            if f[[i, i]] != 0.0 {
                return Err(Error::shape(format!("factor diagonal F[{i}][{i}] is nonzero")));
            }
            for j in 0..i {
                if f[[i, j]] != f[[j, i]] {
                    return Err(Error::shape(format!("factors not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { s, f })
    }

    /// Block with all semantic factors zero.
    pub fn without_factors(s: Array2<f64>) -> Result<Self> {
        let f = Array2::zeros(s.raw_dim());
        Self::new(s, f)
    }

    pub fn size(&self) -> usize {
        self.s.nrows()
    }

    pub fn similarities(&self) -> &Array2<f64> {
        &self.s
    }

    pub fn factors(&self) -> &Array2<f64> {
        &self.f
    }

    pub fn with_similarities(&self, s: Array2<f64>) -> Result<Self> {
        Self::new(s, self.f.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_s: Array2<f64>,
    /// Per image row: the description column chosen as hard negative.
    pub hard_neg_desc: Vec<Option<usize>>,
    /// Per description column: the image row chosen as hard negative.
    pub hard_neg_img: Vec<Option<usize>>,
}

/// `F[i][j] = λ·cos(Bᵢ, Bⱼ)` off the diagonal, 0 on it.
pub fn semantic_factor_matrix(rows: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    let b = rows.nrows();
    let mut f = Array2::zeros((b, b));
    for i in 0..b {
        for j in 0..i {
            let v = lambda * cosine(rows.row(i), rows.row(j));
            f[[i, j]] = v;
            f[[j, i]] = v;
        }
    }
    f
}

/// Smallest and largest effective margin `α + F[i][j]` over off-diagonal cells.
pub fn effective_margin_range(f: &Array2<f64>, alpha: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ((i, j), &x) in f.indexed_iter() {
        if i != j {
            lo = lo.min(alpha + x);
            hi = hi.max(alpha + x);
        }
    }
    (lo, hi)
}

/// Dispatches on `cfg.variant`.
pub fn compute_loss(block: &SimilarityBlock, cfg: &LossConfig) -> Result<LossOutput> {
    match cfg.variant {
        LossVariant::Lsh => lsh(block, cfg),
        LossVariant::Lmh => lmh(block, cfg),
        LossVariant::Lseh => lseh(block, cfg),
    }
}

fn require_batch(block: &SimilarityBlock) -> Result<usize> {
    let b = block.size();
    if b < 2 {
        return Err(Error::shape(format!("batch of {b} has no irrelevant pairs")));
    }
    Ok(b)
}

pub fn lsh(block: &SimilarityBlock, cfg: &LossConfig) -> Result<LossOutput> {
    let b = require_batch(block)?;
    let s = &block.s;
    let mut grad = Array2::zeros((b, b));
    let mut value = 0.0;
    for i in 0..b {
        let pos = s[[i, i]];
        for j in (0..b).filter(|&j| j != i) {
            let h = cfg.alpha + s[[i, j]] - pos;
            if h > 0.0 {
                value += h;
                grad[[i, j]] += 1.0;
                grad[[i, i]] -= 1.0;
            }
            let h = cfg.alpha + s[[j, i]] - pos;
            if h > 0.0 {
                value += h;
                grad[[j, i]] += 1.0;
                grad[[i, i]] -= 1.0;
            }
        }
    }
    Ok(LossOutput {
        value,
        grad_s: grad,
        hard_neg_desc: vec![None; b],
        hard_neg_img: vec![None; b],
    })
}

pub fn lmh(block: &SimilarityBlock, cfg: &LossConfig) -> Result<LossOutput> {
    max_hinge(block, cfg.alpha, false)
}

pub fn lseh(block: &SimilarityBlock, cfg: &LossConfig) -> Result<LossOutput> {
    max_hinge(block, cfg.alpha, true)
}

fn max_hinge(block: &SimilarityBlock, alpha: f64, with_factors: bool) -> Result<LossOutput> {
    let b = require_batch(block)?;
    let s = &block.s;
    let factor = |i: usize, j: usize| if with_factors { block.f[[i, j]] } else { 0.0 };

    let mut grad = Array2::zeros((b, b));
    let mut value = 0.0;
    let mut hard_desc = Vec::with_capacity(b);
    let mut hard_img = Vec::with_capacity(b);
    for i in 0..b {
        let pos = s[[i, i]];

        // image i as query, descriptions j as candidates
        let jd = argmax_excluding(b, i, |j| s[[i, j]] + factor(i, j));
        let h = alpha + (s[[i, jd]] + factor(i, jd)) - pos;
        if h > 0.0 {
            value += h;
            grad[[i, jd]] += 1.0;
            grad[[i, i]] -= 1.0;
        }
        hard_desc.push(Some(jd));

        // description i as query, images j as candidates
        let ji = argmax_excluding(b, i, |j| s[[j, i]] + factor(j, i));
        let h = alpha + (s[[ji, i]] + factor(ji, i)) - pos;
        if h > 0.0 {
            value += h;
            grad[[ji, i]] += 1.0;
            grad[[i, i]] -= 1.0;
        }
        hard_img.push(Some(ji));
    }
    Ok(LossOutput {
        value,
        grad_s: grad,
        hard_neg_desc: hard_desc,
        hard_neg_img: hard_img,
    })
}

/// Index of the largest score over `0..b` without `skip`; lowest index on ties.
fn argmax_excluding(b: usize, skip: usize, score: impl Fn(usize) -> f64) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for j in (0..b).filter(|&j| j != skip) {
        let v = score(j);
        if best == usize::MAX || v > best_score {
            best = j;
            best_score = v;
        }
    }
    best
}

/// Compares `grad_s` against central finite differences, entry by entry.
///
/// Entries whose analytic gradient is zero are skipped, as are entries where
/// moving by `±10·epsilon` changes the active hinge set or a hard-negative
/// choice (a kink or argmax tie lies nearby). Returns the largest relative
/// error among the remaining entries, or 0 when none remain.
pub fn loss_gradient_check(block: &SimilarityBlock, cfg: &LossConfig, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {epsilon} outside [1e-7, 1e-4]"
        )));
    }
    let base = compute_loss(block, cfg)?;
    let b = block.size();
    let mut worst = 0.0f64;
    for r in 0..b {
        for c in 0..b {
            let analytic = base.grad_s[[r, c]];
            if analytic == 0.0 {
                continue;
            }
            let shifted = |delta: f64| -> Result<LossOutput> {
                let mut s = block.s.clone();
                s[[r, c]] += delta;
                compute_loss(&block.with_similarities(s)?, cfg)
            };
            let far_hi = shifted(10.0 * epsilon)?;
            let far_lo = shifted(-10.0 * epsilon)?;
            if !same_structure(&base, &far_hi) || !same_structure(&base, &far_lo) {
                continue;
            }
            let numeric = (shifted(epsilon)?.value - shifted(-epsilon)?.value) / (2.0 * epsilon);
            worst = worst.max((numeric - analytic).abs() / analytic.abs());
        }
    }
    Ok(worst)
}

fn same_structure(a: &LossOutput, b: &LossOutput) -> bool {
    a.grad_s == b.grad_s && a.hard_neg_desc == b.hard_neg_desc && a.hard_neg_img == b.hard_neg_img
}
