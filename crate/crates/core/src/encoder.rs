//! Minimal bi-encoder: a linear projection of image features and a projected
//! mean of word embeddings for descriptions, both L2-normalized, so that
//! `S = V·Uᵀ` holds cosine similarities.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSEM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub d_img: usize,
    pub vocab_size: usize,
    pub d_word: usize,
    pub d_emb: usize,
}

impl EncoderConfig {
    pub fn new(d_img: usize, vocab_size: usize) -> Self {
        Self {
            d_img,
            vocab_size,
            d_word: 64,
            d_emb: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// d_img × d_emb
    pub w_img: Array2<f64>,
    /// vocab_size × d_word
    pub e_word: Array2<f64>,
    /// d_word × d_emb
    pub w_txt: Array2<f64>,
}

/// Parameter gradients. Only the embedding rows of tokens seen in the batch
/// are present in `e_word`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_img: Array2<f64>,
    pub e_word: BTreeMap<usize, Array1<f64>>,
    pub w_txt: Array2<f64>,
}

impl ModelParams {
    /// Uniform(−1/√fan_in, 1/√fan_in) initialization. The embedding table is a
    /// linear map on one-hot inputs, so its fan-in is 1.
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
        };
        let w_img = uniform(cfg.d_img, cfg.d_emb, cfg.d_img);
        let e_word = uniform(cfg.vocab_size, cfg.d_word, 1);
        let w_txt = uniform(cfg.d_word, cfg.d_emb, cfg.d_word);
        Self { w_img, e_word, w_txt }
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            d_img: self.w_img.nrows(),
            vocab_size: self.e_word.nrows(),
            d_word: self.e_word.ncols(),
            d_emb: self.w_img.ncols(),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        if self.w_img.ncols() != self.w_txt.ncols() || self.e_word.ncols() != self.w_txt.nrows() {
            return Err(Error::shape(format!(
                "inconsistent parameter shapes: w_img {:?}, e_word {:?}, w_txt {:?}",
                self.w_img.dim(),
                self.e_word.dim(),
                self.w_txt.dim()
            )));
        }
        Ok(())
    }
}

/// Forward results for one batch, with the activations backward needs.
#[derive(Debug, Clone)]
pub struct BatchEmbeddings {
    /// Unit-norm image embeddings, b × d_emb.
    pub v: Array2<f64>,
    /// Unit-norm description embeddings, b × d_emb.
    pub u: Array2<f64>,
    img_norms: Array1<f64>,
    txt_norms: Array1<f64>,
    word_means: Array2<f64>,
    tokens: Vec<Vec<usize>>,
}

impl BatchEmbeddings {
    /// `S = V·Uᵀ`; row = image, column = description.
    pub fn similarity(&self) -> Array2<f64> {
        self.v.dot(&self.u.t())
    }

    pub fn len(&self) -> usize {
        self.v.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.v.nrows() == 0
    }
}

fn normalize_rows(pre: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = pre.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(row) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroNormEmbedding { row });
    }
    let out = pre / &norms.view().insert_axis(Axis(1));
    Ok((out, norms))
}

fn image_pre(params: &ModelParams, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != params.w_img.nrows() {
        return Err(Error::shape(format!(
            "image features have dimension {}, projection expects {}",
            features.ncols(),
            params.w_img.nrows()
        )));
    }
    Ok(features.dot(&params.w_img))
}

fn word_means(params: &ModelParams, tokens: &[Vec<usize>]) -> Result<Array2<f64>> {
    let vocab = params.e_word.nrows();
    let mut m = Array2::zeros((tokens.len(), params.e_word.ncols()));
    for (i, seq) in tokens.iter().enumerate() {
        if seq.is_empty() {
            return Err(Error::EmptySequence { row: i });
        }
        let mut row = m.row_mut(i);
        for &t in seq {
            if t >= vocab {
                return Err(Error::shape(format!("token id {t} outside vocabulary of {vocab}")));
            }
            row += &params.e_word.row(t);
        }
        row /= seq.len() as f64;
    }
    Ok(m)
}

/// Row-normalized `x·W_img`.
pub fn encode_images(params: &ModelParams, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    normalize_rows(&image_pre(params, features)?).map(|(v, _)| v)
}

/// Row-normalized `mean(E_word[tokens])·W_txt`.
pub fn encode_texts(params: &ModelParams, tokens: &[Vec<usize>]) -> Result<Array2<f64>> {
    let m = word_means(params, tokens)?;
    normalize_rows(&m.dot(&params.w_txt)).map(|(u, _)| u)
}

/// Encodes a batch of aligned (image, description) pairs and keeps caches.
pub fn forward(
    params: &ModelParams,
    features: ArrayView2<f64>,
    tokens: &[Vec<usize>],
) -> Result<BatchEmbeddings> {
    params.check_shapes()?;
    if features.nrows() != tokens.len() {
        return Err(Error::shape(format!(
            "{} images vs {} descriptions in batch",
            features.nrows(),
            tokens.len()
        )));
    }
    let (v, img_norms) = normalize_rows(&image_pre(params, features)?)?;
    let means = word_means(params, tokens)?;
    let (u, txt_norms) = normalize_rows(&means.dot(&params.w_txt))?;
    Ok(BatchEmbeddings {
        v,
        u,
        img_norms,
        txt_norms,
        word_means: means,
        tokens: tokens.to_vec(),
    })
}

/// Backward through `x ↦ x/‖x‖`, row by row.
fn normalize_backward(out: &Array2<f64>, norms: &Array1<f64>, d_out: &Array2<f64>) -> Array2<f64> {
    let mut d_pre = d_out.clone();
    for ((mut d, o), &n) in d_pre.rows_mut().into_iter().zip(out.rows()).zip(norms) {
        let proj = o.dot(&d);
        d.scaled_add(-proj, &o);
        d /= n;
    }
    d_pre
}

/// Chain rule from `∂L/∂S` to the parameters.
pub fn backward(
    params: &ModelParams,
    features: ArrayView2<f64>,
    batch: &BatchEmbeddings,
    grad_s: &Array2<f64>,
) -> Result<Gradients> {
    let b = batch.len();
    if grad_s.dim() != (b, b) || features.nrows() != b {
        return Err(Error::shape(format!(
            "grad_s {:?} / features {:?} do not match batch of {b}",
            grad_s.dim(),
            features.dim()
        )));
    }
    let d_v = grad_s.dot(&batch.u);
    let d_u = grad_s.t().dot(&batch.v);

    let d_img_pre = normalize_backward(&batch.v, &batch.img_norms, &d_v);
    let w_img = features.t().dot(&d_img_pre);

    let d_txt_pre = normalize_backward(&batch.u, &batch.txt_norms, &d_u);
    let w_txt = batch.word_means.t().dot(&d_txt_pre);
    let d_means = d_txt_pre.dot(&params.w_txt.t());

    let mut e_word: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
    for (seq, d_m) in batch.tokens.iter().zip(d_means.rows()) {
        let scale = 1.0 / seq.len() as f64;
        for &t in seq {
            e_word
                .entry(t)
                .or_insert_with(|| Array1::zeros(d_m.len()))
                .scaled_add(scale, &d_m);
        }
    }
    Ok(Gradients { w_img, e_word, w_txt })
}

/// `p ← p − lr·g`. Fails without modifying anything if a gradient is not finite.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
        return Err(Error::InvalidConfig(format!("learning rate {learning_rate}")));
    }
    let finite = grads.w_img.iter().all(|x| x.is_finite())
        && grads.w_txt.iter().all(|x| x.is_finite())
        && grads.e_word.values().flatten().all(|x| x.is_finite());
    if !finite {
        return Err(Error::NonFiniteGradient);
    }
    if grads.w_img.dim() != params.w_img.dim() || grads.w_txt.dim() != params.w_txt.dim() {
        return Err(Error::shape("gradient shapes do not match parameters"));
    }
    params.w_img.scaled_add(-learning_rate, &grads.w_img);
    params.w_txt.scaled_add(-learning_rate, &grads.w_txt);
    for (&t, g) in &grads.e_word {
        if t >= params.e_word.nrows() {
            return Err(Error::shape(format!("gradient for unknown token {t}")));
        }
        params.e_word.row_mut(t).scaled_add(-learning_rate, g);
    }
    Ok(())
}

/// Checkpoint layout (little-endian): `b"LSEM"`, version `u32`, then
/// `(rows: u64, cols: u64)` for W_img, E_word and W_txt, then each matrix
/// as row-major `f64` in that order.
pub fn write_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mats = [&params.w_img, &params.e_word, &params.w_txt];
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for m in mats {
        buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    }
    for m in mats {
        for x in m.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(f)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    const HEADER: usize = 8 + 6 * 8;
    if bytes.len() < HEADER || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let shapes = [(dim(0), dim(1)), (dim(2), dim(3)), (dim(4), dim(5))];
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if bytes.len() != HEADER + 8 * total {
        return Err(bad(format!(
            "expected {} bytes, found {}",
            HEADER + 8 * total,
            bytes.len()
        )));
    }
    let mut values = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |(r, c): (usize, usize)| {
        Array2::from_shape_vec((r, c), values.by_ref().take(r * c).collect()).expect("sized")
    };
    let params = ModelParams {
        w_img: take(shapes[0]),
        e_word: take(shapes[1]),
        w_txt: take(shapes[2]),
    };
    params.check_shapes()?;
    Ok(params)
}
