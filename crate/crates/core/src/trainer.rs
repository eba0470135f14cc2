//! Mini-batch training of the bi-encoder with periodic validation.
//!
//! Per batch: encode the pairs, build the similarity block (plus semantic
//! factors from the batch's own semantic rows when the loss needs them),
//! evaluate the loss, backpropagate and take an SGD step. Every `val_step`
//! batches (counted across epochs) the model is validated on M-Recall and
//! kept if it strictly improves on the best so far.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use crate::data::{minibatches, preprocess_dataset, Dataset, TokenIndex};
use crate::encoder::{self, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::eval::{self, hard_negative_uniques, HardNegLog, HardNegStats, RelevanceMap};
use crate::losses::{compute_loss, semantic_factor_matrix, LossConfig, SimilarityBlock};
use crate::textsem::{PreprocessConfig, ReducedSemantics};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Validate every this many mini-batches, counted cumulatively.
    pub val_step: usize,
    pub learning_rate: f64,
    /// Zero-based epoch from which the learning rate is divided by 10.
    pub lr_update_epoch: Option<usize>,
    pub loss: LossConfig,
    pub d_word: usize,
    pub d_emb: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            val_step: 5,
            learning_rate: 0.02,
            lr_update_epoch: None,
            loss: LossConfig::default(),
            d_word: 64,
            d_emb: 64,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be >= 2".into()));
        }
        if self.val_step == 0 {
            return Err(Error::InvalidConfig("val_step must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.d_word == 0 || self.d_emb == 0 {
            return Err(Error::InvalidConfig("embedding sizes must be >= 1".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRecord {
    pub epoch_fraction: f64,
    pub m_recall: f64,
    /// Mean batch loss since the previous validation.
    pub loss_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub records: Vec<ValidationRecord>,
    pub best_m_recall: Option<f64>,
    pub best_epoch_fraction: Option<f64>,
    pub checkpoint_path: Option<PathBuf>,
    /// Unique hard-negative counts for every training batch, numbered globally.
    pub hard_negatives: Vec<HardNegStats>,
    pub batches_per_epoch: usize,
}

impl TrainingReport {
    /// `epoch_fraction,m_recall,loss_mean`, one row per validation.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch_fraction,m_recall,loss_mean\n");
        for r in &self.records {
            writeln!(out, "{},{},{}", r.epoch_fraction, r.m_recall, r.loss_mean).unwrap();
        }
        out
    }

    /// Hard-negative statistics of the batches in epoch `epoch` (zero-based).
    pub fn epoch_hard_negatives(&self, epoch: usize) -> &[HardNegStats] {
        let start = (epoch * self.batches_per_epoch).min(self.hard_negatives.len());
        let end = ((epoch + 1) * self.batches_per_epoch).min(self.hard_negatives.len());
        &self.hard_negatives[start..end]
    }
}

/// Encoded, index-aligned view of one split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub features: Array2<f64>,
    /// Owning image of each description.
    pub desc_image: Vec<usize>,
    /// Token ids of each description.
    pub tokens: Vec<Vec<usize>>,
    pub relevance: RelevanceMap,
}

impl PreparedSplit {
    pub fn new(dataset: &Dataset, index: &TokenIndex, text: &PreprocessConfig) -> Self {
        let tokens = preprocess_dataset(dataset, text)
            .iter()
            .map(|t| index.encode(t))
            .collect();
        Self {
            features: dataset.features.clone(),
            desc_image: dataset.description_images(),
            tokens,
            relevance: dataset.relevance.clone(),
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.desc_image.len()
    }

    /// Image features and token ids for the given pairs.
    pub fn batch(&self, pairs: &[usize]) -> (Array2<f64>, Vec<Vec<usize>>) {
        let images: Vec<usize> = pairs.iter().map(|&p| self.desc_image[p]).collect();
        let x = self.features.select(Axis(0), &images);
        let toks = pairs.iter().map(|&p| self.tokens[p].clone()).collect();
        (x, toks)
    }
}

/// Everything training needs, built once and shared between runs.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: PreparedSplit,
    pub val: PreparedSplit,
    /// One row per training description, in corpus order.
    pub semantics: ReducedSemantics,
    pub vocab_size: usize,
}

impl TrainingData {
    pub fn new(
        train: &Dataset,
        val: &Dataset,
        semantics: ReducedSemantics,
        text: &PreprocessConfig,
    ) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if semantics.n_rows() != train.n_descriptions() {
            return Err(Error::SemanticRowMisalignment(format!(
                "{} semantic rows for {} training descriptions",
                semantics.n_rows(),
                train.n_descriptions()
            )));
        }
        if train.d_img() != val.d_img() {
            return Err(Error::DimensionMismatch(format!(
                "train features are {}-d, validation features {}-d",
                train.d_img(),
                val.d_img()
            )));
        }
        let docs = preprocess_dataset(train, text);
        let index = TokenIndex::build(&docs);
        let train_split = PreparedSplit {
            tokens: docs.iter().map(|t| index.encode(t)).collect(),
            features: train.features.clone(),
            desc_image: train.description_images(),
            relevance: train.relevance.clone(),
        };
        Ok(Self {
            val: PreparedSplit::new(val, &index, text),
            train: train_split,
            semantics,
            vocab_size: index.len(),
        })
    }

    pub fn encoder_config(&self, cfg: &TrainConfig) -> EncoderConfig {
        EncoderConfig {
            d_img: self.train.features.ncols(),
            vocab_size: self.vocab_size,
            d_word: cfg.d_word,
            d_emb: cfg.d_emb,
        }
    }
}

/// Full similarity matrix (images × descriptions) of a split under `params`.
pub fn similarity_matrix(params: &ModelParams, split: &PreparedSplit) -> Result<Array2<f64>> {
    let v = encoder::encode_images(params, split.features.view())?;
    let u = encoder::encode_texts(params, &split.tokens)?;
    Ok(v.dot(&u.t()))
}

pub fn validate(params: &ModelParams, val: &PreparedSplit) -> Result<f64> {
    let sim = similarity_matrix(params, val)?;
    Ok(eval::evaluate(&sim, &val.relevance)?.m_recall)
}

/// Loss inputs for one batch of training pairs.
pub fn batch_block(
    params: &ModelParams,
    data: &TrainingData,
    pairs: &[usize],
    loss: &LossConfig,
) -> Result<(SimilarityBlock, encoder::BatchEmbeddings, Array2<f64>)> {
    if pairs.len() < 2 {
        return Err(Error::EmptyBatch);
    }
    let (x, toks) = data.train.batch(pairs);
    let emb = encoder::forward(params, x.view(), &toks)?;
    let s = emb.similarity();
    let block = if loss.uses_semantics() {
        // Semantic rows are fetched with the same pair indices as the batch.
        let rows = data.semantics.rows(pairs);
        SimilarityBlock::new(s, semantic_factor_matrix(rows.view(), loss.lambda))?
    } else {
        SimilarityBlock::without_factors(s)?
    };
    Ok((block, emb, x))
}

/// Runs training. Returns the report and the best validated parameters (the
/// initial parameters if validation never ran). When `checkpoint` is given,
/// the best model is written there on every strict improvement.
pub fn train(
    data: &TrainingData,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(TrainingReport, ModelParams)> {
    cfg.validate()?;
    let mut params = ModelParams::init(&data.encoder_config(cfg), cfg.seed);
    let mut best_params = params.clone();
    let mut lr = cfg.learning_rate;

    let n = data.train.n_pairs();
    let batches_per_epoch = minibatches(n, cfg.batch_size, cfg.seed, 0)?.len();
    if batches_per_epoch == 0 {
        return Err(Error::EmptyBatch);
    }

    let mut report = TrainingReport {
        records: Vec::new(),
        best_m_recall: None,
        best_epoch_fraction: None,
        checkpoint_path: None,
        hard_negatives: Vec::new(),
        batches_per_epoch,
    };
    let mut global_batch = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;

    for epoch in 0..cfg.epochs {
        if cfg.lr_update_epoch == Some(epoch) {
            lr /= 10.0;
            log::info!("epoch {epoch}: learning rate -> {lr}");
        }
        for pairs in minibatches(n, cfg.batch_size, cfg.seed, epoch)? {
            let (block, emb, x) = batch_block(&params, data, &pairs, &cfg.loss)?;
            let out = compute_loss(&block, &cfg.loss)?;
            let grads = encoder::backward(&params, x.view(), &emb, &out.grad_s)?;
            encoder::sgd_step(&mut params, &grads, lr)?;

            let mut stats = hard_negative_uniques(&[HardNegLog::from(&out)])[0];
            stats.batch_index = global_batch;
            report.hard_negatives.push(stats);
            loss_sum += out.value;
            loss_count += 1;
            global_batch += 1;

            if global_batch % cfg.val_step == 0 {
                let m = validate(&params, &data.val)?;
                let epoch_fraction = global_batch as f64 / batches_per_epoch as f64;
                report.records.push(ValidationRecord {
                    epoch_fraction,
                    m_recall: m,
                    loss_mean: loss_sum / loss_count as f64,
                });
                loss_sum = 0.0;
                loss_count = 0;
                log::debug!("epoch {epoch_fraction:.3}: m_recall {m:.3}");
                if report.best_m_recall.is_none_or(|b| m > b) {
                    report.best_m_recall = Some(m);
                    report.best_epoch_fraction = Some(epoch_fraction);
                    best_params = params.clone();
                    if let Some(path) = checkpoint {
                        encoder::write_checkpoint(&params, path)?;
                        report.checkpoint_path = Some(path.to_path_buf());
                    }
                }
            }
        }
    }
    Ok((report, best_params))
}

/// Hard-negative counts for one epoch's batches under fixed parameters.
pub fn hard_negative_pass(
    params: &ModelParams,
    data: &TrainingData,
    loss: &LossConfig,
    seed: u64,
    epoch: usize,
    batch_size: usize,
) -> Result<Vec<HardNegStats>> {
    if data.train.n_pairs() < 2 {
        return Err(Error::EmptyDataset);
    }
    let mut logs = Vec::new();
    for pairs in minibatches(data.train.n_pairs(), batch_size, seed, epoch)? {
        let (block, _, _) = batch_block(params, data, &pairs, loss)?;
        logs.push(HardNegLog::from(&compute_loss(&block, loss)?));
    }
    Ok(hard_negative_uniques(&logs))
}
