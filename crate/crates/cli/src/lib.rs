//! Command implementations behind the `lseh` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lseh_core::config::RunConfig;
use lseh_core::data::{generate_synthetic, load_dataset, preprocess_dataset, write_dataset, Split, TokenIndex};
use lseh_core::encoder::{read_checkpoint, ModelParams};
use lseh_core::eval::{diagnostics_csv, efficiency_difference, epochs_to_threshold, evaluate};
use lseh_core::losses::LossVariant;
use lseh_core::textsem::{corpus_semantics, write_semantics, SvdOptions};
use lseh_core::trainer::{self, hard_negative_pass, PreparedSplit, TrainingData};
use lseh_core::{Dataset, Error, TrainingReport};

#[derive(Debug, Parser)]
#[command(name = "lseh", version, about = "Semantically-enhanced hard-negative training for image-text retrieval")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. --set loss.lambda=0.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    pub out: PathBuf,
    /// Shortcut for --set seed=<u64>.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Train one model and keep the best validated checkpoint.
    Train,
    /// Evaluate a checkpoint on the validation split.
    Eval(CheckpointArg),
    /// Export the reduced description semantics of the training split.
    Svd,
    /// Write a synthetic corpus in the on-disk formats.
    Gen,
    /// Train LMH and LSEH from the same seed and compare efficiency.
    Compare,
    /// Per-batch unique hard-negative counts for a checkpoint.
    Diag(CheckpointArg),
}

#[derive(Debug, Clone, Args)]
pub struct CheckpointArg {
    /// Defaults to <out>/model.bin.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .with_context(|| format!("{key} must be set when reading datasets from files"))
}

/// Train and validation splits: from files if configured, else synthetic.
pub fn load_splits(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    if cfg.uses_files() {
        let train = load_dataset(
            required(&cfg.train_captions, "data.train_captions")?,
            required(&cfg.train_features, "data.train_features")?,
            Split::Train,
        )?;
        let val = load_dataset(
            required(&cfg.val_captions, "data.val_captions")?,
            required(&cfg.val_features, "data.val_features")?,
            Split::Val,
        )?;
        Ok((train, val))
    } else {
        let ds = generate_synthetic(&cfg.synthetic_spec())?;
        Ok(ds.split_holdout(cfg.val_every)?)
    }
}

/// Dataset, semantics and token ids ready for training.
pub fn prepare(cfg: &RunConfig) -> Result<TrainingData> {
    let (train, val) = load_splits(cfg)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let text = cfg.preprocess()?;
    let docs = preprocess_dataset(&train, &text);
    let (_, sem) = corpus_semantics(&docs, cfg.svd_k, &SvdOptions::default())?;
    Ok(TrainingData::new(&train, &val, sem, &text)?)
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn with_header(cfg: &RunConfig, body: &str) -> String {
    cfg.header_line() + body
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| x.to_string())
}

pub fn summary_line(report: &TrainingReport) -> String {
    format!(
        "best_m_recall={} at_epoch={}",
        fmt_opt(report.best_m_recall),
        fmt_opt(report.best_epoch_fraction)
    )
}

pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<String> {
    let data = prepare(cfg)?;
    let ckpt = out.join("model.bin");
    let (report, _) = trainer::train(&data, &cfg.train_config(), Some(&ckpt))?;
    write(&out.join("curve.csv"), &with_header(cfg, &report.curve_csv()))?;
    if report.checkpoint_path.is_none() {
        bail!("no validation ran (train.val_step exceeds the number of batches), so no checkpoint was written");
    }
    Ok(summary_line(&report))
}

fn checkpoint_path(arg: &CheckpointArg, out: &Path) -> PathBuf {
    arg.checkpoint.clone().unwrap_or_else(|| out.join("model.bin"))
}

fn load_model(path: &Path, expected_vocab: usize, d_img: usize) -> Result<ModelParams> {
    let params = read_checkpoint(path)?;
    let c = params.config();
    if c.vocab_size != expected_vocab || c.d_img != d_img {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint {} expects vocab {} and {}-d features; data has {} and {}",
            path.display(),
            c.vocab_size,
            c.d_img,
            expected_vocab,
            d_img
        ))
        .into());
    }
    Ok(params)
}

pub fn run_eval(cfg: &RunConfig, out: &Path, arg: &CheckpointArg) -> Result<String> {
    let (train, val) = load_splits(cfg)?;
    if val.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let text = cfg.preprocess()?;
    let index = TokenIndex::build(&preprocess_dataset(&train, &text));
    let params = load_model(&checkpoint_path(arg, out), index.len(), val.d_img())?;
    let split = PreparedSplit::new(&val, &index, &text);
    let report = evaluate(&trainer::similarity_matrix(&params, &split)?, &split.relevance)?;
    write(&out.join("eval.csv"), &with_header(cfg, &report.to_csv()))?;
    Ok(format!("m_recall={}", report.m_recall))
}

pub fn run_svd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (train, _) = load_splits(cfg)?;
    let docs = preprocess_dataset(&train, &cfg.preprocess()?);
    let (vocab, sem) = corpus_semantics(&docs, cfg.svd_k, &SvdOptions::default())?;
    write_semantics(&sem, &out.join("semantics.bin"), &out.join("singular_values.txt"))?;
    Ok(format!(
        "descriptions={} terms={} k={}",
        sem.n_rows(),
        vocab.len(),
        sem.k()
    ))
}

pub fn run_gen(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = generate_synthetic(&cfg.synthetic_spec())?;
    let (train, val) = ds.split_holdout(cfg.val_every)?;
    write_dataset(&train, &out.join("train_captions.tsv"), &out.join("train_features.txt"))?;
    write_dataset(&val, &out.join("val_captions.tsv"), &out.join("val_features.txt"))?;
    Ok(format!(
        "train_images={} val_images={}",
        train.n_images(),
        val.n_images()
    ))
}

/// Outcome of a paired LMH/LSEH run.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub lmh: TrainingReport,
    pub lseh: TrainingReport,
    /// LMH's best M-Recall, the threshold both runs are timed against.
    pub reference: f64,
    pub lmh_epochs: f64,
    pub lseh_epochs: Option<f64>,
    /// Percent change; `None` when LSEH never reached the reference.
    pub difference: Option<f64>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "reference_m_recall,lmh_best_m_recall,lmh_epochs,lseh_best_m_recall,lseh_epochs,difference_epochs,difference_percent\n",
        );
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.reference,
            fmt_opt(self.lmh.best_m_recall),
            self.lmh_epochs,
            fmt_opt(self.lseh.best_m_recall),
            fmt_opt(self.lseh_epochs),
            fmt_opt(self.lseh_epochs.map(|e| e - self.lmh_epochs)),
            fmt_opt(self.difference)
        )
        .unwrap();
        out
    }
}

/// Trains both losses on the same prepared data and seed. The LSEH run uses
/// the configured α and λ; LMH uses the same α.
pub fn compare(cfg: &RunConfig, data: &TrainingData) -> Result<Comparison> {
    let mut tc = cfg.train_config();
    tc.loss.variant = LossVariant::Lmh;
    let (lmh, _) = trainer::train(data, &tc, None)?;
    tc.loss.variant = LossVariant::Lseh;
    let (lseh, _) = trainer::train(data, &tc, None)?;

    let reference = lmh.best_m_recall.ok_or(Error::BeforeFirstValidation)?;
    let lmh_epochs = epochs_to_threshold(&lmh, reference).ok_or(Error::BeforeFirstValidation)?;
    let lseh_epochs = epochs_to_threshold(&lseh, reference);
    let difference = lseh_epochs
        .map(|e| efficiency_difference(e, lmh_epochs))
        .transpose()?;
    Ok(Comparison {
        lmh,
        lseh,
        reference,
        lmh_epochs,
        lseh_epochs,
        difference,
    })
}

pub fn run_compare(cfg: &RunConfig, out: &Path) -> Result<String> {
    let data = prepare(cfg)?;
    let cmp = compare(cfg, &data)?;
    write(&out.join("compare.csv"), &with_header(cfg, &cmp.to_csv()))?;
    write(&out.join("curve_lmh.csv"), &with_header(cfg, &cmp.lmh.curve_csv()))?;
    write(&out.join("curve_lseh.csv"), &with_header(cfg, &cmp.lseh.curve_csv()))?;
    Ok(format!(
        "reference={} lmh_epochs={} lseh_epochs={} difference={}",
        cmp.reference,
        cmp.lmh_epochs,
        fmt_opt(cmp.lseh_epochs),
        fmt_opt(cmp.difference)
    ))
}

pub fn run_diag(cfg: &RunConfig, out: &Path, arg: &CheckpointArg) -> Result<String> {
    let data = prepare(cfg)?;
    let params = load_model(&checkpoint_path(arg, out), data.vocab_size, data.train.features.ncols())?;
    let tc = cfg.train_config();
    let stats = hard_negative_pass(&params, &data, &tc.loss, tc.seed, 0, tc.batch_size)?;
    write(&out.join("diag.csv"), &with_header(cfg, &diagnostics_csv(&stats)))?;
    let n = stats.len().max(1) as f64;
    let mean_img = stats.iter().map(|s| s.unique_img as f64).sum::<f64>() / n;
    let mean_desc = stats.iter().map(|s| s.unique_desc as f64).sum::<f64>() / n;
    Ok(format!("batches={} mean_unique_img={mean_img} mean_unique_desc={mean_desc}", stats.len()))
}

/// Runs one command; returns the line to print on success.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(&cli.common)?;
    let out = &cli.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Train => run_train(&cfg, out),
        Command::Eval(arg) => run_eval(&cfg, out, arg),
        Command::Svd => run_svd(&cfg, out),
        Command::Gen => run_gen(&cfg, out),
        Command::Compare => run_compare(&cfg, out),
        Command::Diag(arg) => run_diag(&cfg, out, arg),
    }
}
