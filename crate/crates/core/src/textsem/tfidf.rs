use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Term index over a description corpus. Columns are assigned in sorted term
/// order, so the mapping does not depend on document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    term_to_index: BTreeMap<String, usize>,
    document_frequency: Vec<usize>,
    n_documents: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.document_frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.document_frequency.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_to_index.get(term).copied()
    }

    pub fn document_frequency(&self, index: usize) -> usize {
        self.document_frequency[index]
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    /// Terms in column order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.term_to_index.keys().map(String::as_str)
    }

    /// `ln(n / df)`.
    pub fn idf(&self, index: usize) -> f64 {
        (self.n_documents as f64 / self.document_frequency[index] as f64).ln()
    }
}

/// Row-sparse n×w matrix of TF-IDF weights. Each row holds `(column, weight)`
/// pairs in increasing column order; zero weights are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDocMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    n_cols: usize,
}

impl TermDocMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, n_cols: usize) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::shape(format!("row {i}: columns not strictly increasing")));
                }
            }
            if let Some(&(c, _)) = row.last() {
                if c >= n_cols {
                    return Err(Error::shape(format!("row {i}: column {c} >= {n_cols}")));
                }
            }
        }
        Ok(Self { rows, n_cols })
    }

    pub fn from_dense(a: &Array2<f64>) -> Self {
        let rows = a
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self {
            rows,
            n_cols: a.ncols(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_rows(), self.n_cols));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[[i, j]] = v;
            }
        }
        a
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.rows.iter().flatten().map(|(_, v)| v * v).sum()
    }

    /// `A · x` for dense `x` (w×m).
    pub fn mul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n_cols);
        let m = x.ncols();
        let mut out = Array2::zeros((self.n_rows(), m));
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, v) in row {
                o.scaled_add(v, &x.row(j));
            }
        }
        out
    }

    /// `Aᵀ · y` for dense `y` (n×m).
    pub fn t_mul_dense(&self, y: &Array2<f64>) -> Array2<f64> {
        assert_eq!(y.nrows(), self.n_rows());
        let m = y.ncols();
        let mut out = Array2::zeros((self.n_cols, m));
        for (i, row) in self.rows.iter().enumerate() {
            let yi = y.row(i);
            for &(j, v) in row {
                out.row_mut(j).scaled_add(v, &yi);
            }
        }
        out
    }

    /// Returns a matrix whose row `r` is row `order[r]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self {
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            n_cols: self.n_cols,
        }
    }
}

/// Builds the vocabulary and the raw-count × `ln(n/df)` weight matrix.
/// Rows follow corpus order. Documents that are empty stay as all-zero rows.
pub fn build_tfidf<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<(Vocabulary, TermDocMatrix)> {
    if docs.len() < 2 {
        return Err(Error::TooFewDocuments {
            required: 2,
            got: docs.len(),
        });
    }
    if docs.iter().all(Vec::is_empty) {
        return Err(Error::AllDocumentsEmpty);
    }

    let mut df_by_term: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: Vec<BTreeMap<&str, usize>> = Vec::with_capacity(docs.len());
    for (i, doc) in docs.iter().enumerate() {
        if doc.is_empty() {
            log::warn!("description {i} is empty after preprocessing; its semantic row is zero");
        }
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for t in doc {
            *tf.entry(t.as_ref()).or_default() += 1;
        }
        for t in tf.keys() {
            *df_by_term.entry(t).or_default() += 1;
        }
        counts.push(tf);
    }

    let term_to_index: BTreeMap<String, usize> = df_by_term
        .keys()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i))
        .collect();
    let document_frequency: Vec<usize> = df_by_term.values().copied().collect();
    let vocab = Vocabulary {
        term_to_index,
        document_frequency,
        n_documents: docs.len(),
    };

    let rows = counts
        .iter()
        .map(|tf| {
            // BTreeMap iteration is sorted by term, which is also column order.
            tf.iter()
                .filter_map(|(t, &c)| {
                    let j = vocab.term_to_index[*t];
                    let w = c as f64 * vocab.idf(j);
                    (w != 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect();
    let matrix = TermDocMatrix {
        rows,
        n_cols: vocab.len(),
    };
    Ok((vocab, matrix))
}
