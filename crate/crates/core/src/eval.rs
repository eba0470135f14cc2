//! Cross-modal retrieval metrics and training-efficiency diagnostics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::LossOutput;
use crate::trainer::TrainingReport;

pub const RECALL_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Image queries ranking descriptions.
    ImageToText,
    /// Description queries ranking images.
    TextToImage,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::ImageToText => "i2t",
            Direction::TextToImage => "t2i",
        }
    }
}

/// Which descriptions belong to which image, in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceMap {
    image_to_descs: Vec<Vec<usize>>,
    desc_to_images: Vec<Vec<usize>>,
}

impl RelevanceMap {
    /// Builds the map from each description's owning image.
    pub fn from_description_images(desc_image: &[usize], n_images: usize) -> Result<Self> {
        let mut image_to_descs = vec![Vec::new(); n_images];
        for (d, &img) in desc_image.iter().enumerate() {
            if img >= n_images {
                return Err(Error::IndexOutOfRange {
                    index: img,
                    len: n_images,
                });
            }
            image_to_descs[img].push(d);
        }
        if let Some(i) = image_to_descs.iter().position(Vec::is_empty) {
            return Err(Error::shape(format!("image {i} has no relevant description")));
        }
        let desc_to_images = desc_image.iter().map(|&i| vec![i]).collect();
        Ok(Self {
            image_to_descs,
            desc_to_images,
        })
    }

    /// One description per image, description `i` belonging to image `i`.
    pub fn one_to_one(n: usize) -> Self {
        Self {
            image_to_descs: (0..n).map(|i| vec![i]).collect(),
            desc_to_images: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn n_images(&self) -> usize {
        self.image_to_descs.len()
    }

    pub fn n_descriptions(&self) -> usize {
        self.desc_to_images.len()
    }

    pub fn descriptions_of(&self, image: usize) -> &[usize] {
        &self.image_to_descs[image]
    }

    pub fn images_of(&self, description: usize) -> &[usize] {
        &self.desc_to_images[description]
    }
}

/// Percentage of queries with at least one relevant candidate among the top
/// `k`. `sim` is images × descriptions. Candidates are ranked by descending
/// similarity, lower index first on ties.
pub fn recall_at_k(
    sim: &Array2<f64>,
    relevance: &RelevanceMap,
    k: usize,
    direction: Direction,
) -> Result<f64> {
    Ok(recall_at_ks(sim, relevance, &[k], direction)?[0])
}

fn recall_at_ks(
    sim: &Array2<f64>,
    relevance: &RelevanceMap,
    ks: &[usize],
    direction: Direction,
) -> Result<Vec<f64>> {
    if ks.contains(&0) {
        return Err(Error::InvalidConfig("recall cutoff k must be >= 1".into()));
    }
    if sim.dim() != (relevance.n_images(), relevance.n_descriptions()) {
        return Err(Error::shape(format!(
            "similarity {:?} vs relevance {} images × {} descriptions",
            sim.dim(),
            relevance.n_images(),
            relevance.n_descriptions()
        )));
    }
    let (n_queries, n_candidates) = match direction {
        Direction::ImageToText => (sim.nrows(), sim.ncols()),
        Direction::TextToImage => (sim.ncols(), sim.nrows()),
    };
    if n_queries == 0 {
        return Err(Error::EmptyDataset);
    }
    let score = |q: usize, c: usize| match direction {
        Direction::ImageToText => sim[[q, c]],
        Direction::TextToImage => sim[[c, q]],
    };
    let mut hits = vec![0usize; ks.len()];
    for q in 0..n_queries {
        let relevant = match direction {
            Direction::ImageToText => relevance.descriptions_of(q),
            Direction::TextToImage => relevance.images_of(q),
        };
        // Rank (0-based) of the best-placed relevant candidate.
        let best_rank = relevant
            .iter()
            .map(|&r| {
                let sr = score(q, r);
                (0..n_candidates)
                    .filter(|&c| {
                        let sc = score(q, c);
                        sc > sr || (sc == sr && c < r)
                    })
                    .count()
            })
            .min()
            .unwrap_or(usize::MAX);
        for (h, &k) in hits.iter_mut().zip(ks) {
            if best_rank < k {
                *h += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| 100.0 * h as f64 / n_queries as f64)
        .collect())
}

/// Mean of the six Recall@{1,5,10} values over both directions.
pub fn m_recall(values: &[f64; 6]) -> f64 {
    values.iter().sum::<f64>() / 6.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalReport {
    /// Recall@1, @5, @10 for image → text.
    pub i2t: [f64; 3],
    /// Recall@1, @5, @10 for text → image.
    pub t2i: [f64; 3],
    pub m_recall: f64,
}

impl RetrievalReport {
    pub fn all(&self) -> [f64; 6] {
        [
            self.i2t[0], self.i2t[1], self.i2t[2], self.t2i[0], self.t2i[1], self.t2i[2],
        ]
    }

    /// `direction,k,recall` rows followed by an `m_recall` summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction,k,recall\n");
        for (dir, vals) in [("i2t", self.i2t), ("t2i", self.t2i)] {
            for (k, v) in RECALL_KS.iter().zip(vals) {
                writeln!(out, "{dir},{k},{v}").unwrap();
            }
        }
        writeln!(out, "m_recall,,{}", self.m_recall).unwrap();
        out
    }
}

pub fn evaluate(sim: &Array2<f64>, relevance: &RelevanceMap) -> Result<RetrievalReport> {
    let i2t = recall_at_ks(sim, relevance, &RECALL_KS, Direction::ImageToText)?;
    let t2i = recall_at_ks(sim, relevance, &RECALL_KS, Direction::TextToImage)?;
    let i2t = [i2t[0], i2t[1], i2t[2]];
    let t2i = [t2i[0], t2i[1], t2i[2]];
    let m = m_recall(&[i2t[0], i2t[1], i2t[2], t2i[0], t2i[1], t2i[2]]);
    Ok(RetrievalReport {
        i2t,
        t2i,
        m_recall: m,
    })
}

/// Signed percent change in epochs: `100·(lseh − lmh)/lmh`. Negative means
/// the semantically-enhanced run got there sooner.
pub fn efficiency_difference(epochs_lseh: f64, epochs_lmh: f64) -> Result<f64> {
    if epochs_lmh == 0.0 {
        return Err(Error::DivisionByZero("reference epoch count is zero"));
    }
    Ok(100.0 * (epochs_lseh - epochs_lmh) / epochs_lmh)
}

/// Earliest validation point whose M-Recall reaches `threshold`.
pub fn epochs_to_threshold(report: &TrainingReport, threshold: f64) -> Option<f64> {
    report
        .records
        .iter()
        .find(|r| r.m_recall >= threshold)
        .map(|r| r.epoch_fraction)
}

/// Hard-negative choices made in one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HardNegLog {
    pub hard_neg_desc: Vec<Option<usize>>,
    pub hard_neg_img: Vec<Option<usize>>,
}

impl From<&LossOutput> for HardNegLog {
    fn from(out: &LossOutput) -> Self {
        Self {
            hard_neg_desc: out.hard_neg_desc.clone(),
            hard_neg_img: out.hard_neg_img.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardNegStats {
    pub batch_index: usize,
    /// Distinct image embeddings used as hard negatives.
    pub unique_img: usize,
    /// Distinct description embeddings used as hard negatives.
    pub unique_desc: usize,
}

pub fn hard_negative_uniques(logs: &[HardNegLog]) -> Vec<HardNegStats> {
    logs.iter()
        .enumerate()
        .map(|(batch_index, log)| HardNegStats {
            batch_index,
            unique_img: log.hard_neg_img.iter().flatten().collect::<BTreeSet<_>>().len(),
            unique_desc: log.hard_neg_desc.iter().flatten().collect::<BTreeSet<_>>().len(),
        })
        .collect()
}

pub fn diagnostics_csv(stats: &[HardNegStats]) -> String {
    let mut out = String::from("batch_index,unique_img,unique_desc\n");
    for s in stats {
        writeln!(out, "{},{},{}", s.batch_index, s.unique_img, s.unique_desc).unwrap();
    }
    out
}
