//! Flat `key = value` run configuration.
//!
//! Files hold one entry per line; `#` starts a comment. Overrides are applied
//! after the file. Unknown keys and unparsable values are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossVariant};
use crate::textsem::PreprocessConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub train_captions: Option<PathBuf>,
    pub train_features: Option<PathBuf>,
    pub val_captions: Option<PathBuf>,
    pub val_features: Option<PathBuf>,
    pub synth: SyntheticSpec,
    /// Every n-th synthetic image goes to validation.
    pub val_every: usize,
    pub min_token_length: usize,
    pub stemming: bool,
    pub stopwords: Option<PathBuf>,
    pub svd_k: Option<usize>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let text = PreprocessConfig::default();
        Self {
            seed: 42,
            train_captions: None,
            train_features: None,
            val_captions: None,
            val_features: None,
            synth: SyntheticSpec::default(),
            val_every: 5,
            min_token_length: text.min_token_length,
            stemming: text.stemming,
            stopwords: None,
            svd_k: None,
            train: TrainConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "data.train_captions",
    "data.train_features",
    "data.val_captions",
    "data.val_features",
    "synth.n_clusters",
    "synth.items_per_cluster",
    "synth.captions_per_image",
    "synth.d_img",
    "synth.overlap",
    "synth.noise",
    "synth.topic_words",
    "synth.attribute_words",
    "synth.attributes_per_image",
    "synth.filler_words",
    "synth.feature_offset",
    "synth.val_every",
    "text.min_token_length",
    "text.stemming",
    "text.stopwords",
    "svd.k",
    "model.d_word",
    "model.d_emb",
    "train.epochs",
    "train.batch_size",
    "train.val_step",
    "train.lr",
    "train.lr_update_epoch",
    "loss.variant",
    "loss.alpha",
    "loss.lambda",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::InvalidConfig(format!("{key}={value}: {e}")))
}

/// `none` (or empty) clears an optional value.
fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() || value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn path_opt(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && !value.eq_ignore_ascii_case("none")).then(|| PathBuf::from(value))
}

fn show_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref()
        .map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.train_captions" => self.train_captions = path_opt(value),
            "data.train_features" => self.train_features = path_opt(value),
            "data.val_captions" => self.val_captions = path_opt(value),
            "data.val_features" => self.val_features = path_opt(value),
            "synth.n_clusters" => s.n_clusters = parse(key, value)?,
            "synth.items_per_cluster" => s.items_per_cluster = parse(key, value)?,
            "synth.captions_per_image" => s.captions_per_image = parse(key, value)?,
            "synth.d_img" => s.d_img = parse(key, value)?,
            "synth.overlap" => s.overlap = parse(key, value)?,
            "synth.noise" => s.noise = parse(key, value)?,
            "synth.topic_words" => s.topic_words = parse(key, value)?,
            "synth.attribute_words" => s.attribute_words = parse(key, value)?,
            "synth.attributes_per_image" => s.attributes_per_image = parse(key, value)?,
            "synth.filler_words" => s.filler_words = parse(key, value)?,
            "synth.feature_offset" => s.feature_offset = parse_opt(key, value)?,
            "synth.val_every" => self.val_every = parse(key, value)?,
            "text.min_token_length" => self.min_token_length = parse(key, value)?,
            "text.stemming" => self.stemming = parse(key, value)?,
            "text.stopwords" => self.stopwords = path_opt(value),
            "svd.k" => self.svd_k = parse_opt(key, value)?,
            "model.d_word" => t.d_word = parse(key, value)?,
            "model.d_emb" => t.d_emb = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.val_step" => t.val_step = parse(key, value)?,
            "train.lr" => t.learning_rate = parse(key, value)?,
            "train.lr_update_epoch" => t.lr_update_epoch = parse_opt(key, value)?,
            "loss.variant" => t.loss.variant = parse::<LossVariant>(key, value)?,
            "loss.alpha" => t.loss.alpha = parse(key, value)?,
            "loss.lambda" => t.loss.lambda = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.synth;
        let t = &self.train;
        Some(match key {
            "seed" => self.seed.to_string(),
            "data.train_captions" => show_path(&self.train_captions),
            "data.train_features" => show_path(&self.train_features),
            "data.val_captions" => show_path(&self.val_captions),
            "data.val_features" => show_path(&self.val_features),
            "synth.n_clusters" => s.n_clusters.to_string(),
            "synth.items_per_cluster" => s.items_per_cluster.to_string(),
            "synth.captions_per_image" => s.captions_per_image.to_string(),
            "synth.d_img" => s.d_img.to_string(),
            "synth.overlap" => s.overlap.to_string(),
            "synth.noise" => s.noise.to_string(),
            "synth.topic_words" => s.topic_words.to_string(),
            "synth.attribute_words" => s.attribute_words.to_string(),
            "synth.attributes_per_image" => s.attributes_per_image.to_string(),
            "synth.filler_words" => s.filler_words.to_string(),
            "synth.feature_offset" => show_opt(&s.feature_offset),
            "synth.val_every" => self.val_every.to_string(),
            "text.min_token_length" => self.min_token_length.to_string(),
            "text.stemming" => self.stemming.to_string(),
            "text.stopwords" => show_path(&self.stopwords),
            "svd.k" => show_opt(&self.svd_k),
            "model.d_word" => t.d_word.to_string(),
            "model.d_emb" => t.d_emb.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.val_step" => t.val_step.to_string(),
            "train.lr" => t.learning_rate.to_string(),
            "train.lr_update_epoch" => show_opt(&t.lr_update_epoch),
            "loss.variant" => t.loss.variant.to_string(),
            "loss.alpha" => t.loss.alpha.to_string(),
            "loss.lambda" => t.loss.lambda.to_string(),
            _ => return None,
        })
    }

    /// Single `# key=value ...` line recording every resolved key.
    pub fn header_line(&self) -> String {
        let mut out = String::from("#");
        for key in KEYS {
            write!(out, " {key}={}", self.get(key).expect("listed key")).unwrap();
        }
        out.push('\n');
        out
    }

    /// The seed propagates to the generator and the trainer.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn loss(&self) -> LossConfig {
        self.train.loss
    }

    pub fn preprocess(&self) -> Result<PreprocessConfig> {
        let mut cfg = PreprocessConfig {
            min_token_length: self.min_token_length,
            stemming: self.stemming,
            ..PreprocessConfig::default()
        };
        if let Some(path) = &self.stopwords {
            cfg = cfg.with_stopword_file(path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn uses_files(&self) -> bool {
        self.train_captions.is_some() || self.train_features.is_some()
    }
}
