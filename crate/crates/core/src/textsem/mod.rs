//! Description-corpus semantics: preprocessing, TF-IDF weighting, truncated
//! SVD and cosine similarity between reduced description vectors.

mod export;
pub mod porter;
mod preprocess;
mod svd;
mod tfidf;

pub use export::{read_semantics, write_semantics, SEMANTICS_MAGIC, SEMANTICS_VERSION};
pub use preprocess::{preprocess, PreprocessConfig, DEFAULT_STOPWORDS};
pub use svd::{default_rank, truncated_svd, truncated_svd_with, ReducedSemantics, SvdOptions};
pub use tfidf::{build_tfidf, TermDocMatrix, Vocabulary};

use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Cosine of two vectors; 0 when either has zero norm. Clamped to [−1, 1].
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity of row `i` of B against each row in `others`.
pub fn semantic_similarity(
    sem: &ReducedSemantics,
    i: usize,
    others: &[usize],
) -> Result<Vec<f64>> {
    let n = sem.n_rows();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if let Some(&j) = others.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    if others.contains(&i) {
        return Err(Error::SelfComparison(i));
    }
    let bi = sem.b.row(i);
    Ok(others.iter().map(|&j| cosine(bi, sem.b.row(j))).collect())
}

/// Full pipeline from preprocessed descriptions to reduced semantics.
/// `k = None` selects [`default_rank`].
pub fn corpus_semantics<S: AsRef<str>>(
    docs: &[Vec<S>],
    k: Option<usize>,
    opts: &SvdOptions,
) -> Result<(Vocabulary, ReducedSemantics)> {
    let (vocab, a) = build_tfidf(docs)?;
    let k = k.unwrap_or_else(|| default_rank(a.n_rows(), a.n_cols()));
    let sem = truncated_svd_with(&a, k, opts)?;
    Ok((vocab, sem))
}
