//! Central finite differences through the whole encoder and loss.

use lseh_core::encoder::{backward, forward, EncoderConfig, ModelParams};
use lseh_core::losses::{compute_loss, LossConfig, LossOutput, LossVariant, SimilarityBlock};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_block, random_matrix};

pub struct Problem {
    pub params: ModelParams,
    pub x: Array2<f64>,
    pub tokens: Vec<Vec<usize>>,
    pub f: Array2<f64>,
    pub loss: LossConfig,
}

pub fn loss_at(p: &Problem, params: &ModelParams) -> LossOutput {
    let emb = forward(params, p.x.view(), &p.tokens).unwrap();
    compute_loss(&SimilarityBlock::new(emb.similarity(), p.f.clone()).unwrap(), &p.loss).unwrap()
}

fn same_structure(a: &LossOutput, b: &LossOutput) -> bool {
    let active = |o: &LossOutput| o.grad_s.mapv(|g| g != 0.0);
    active(a) == active(b) && a.hard_neg_desc == b.hard_neg_desc && a.hard_neg_img == b.hard_neg_img
}

/// Largest norm-wise relative error between the analytic gradient and central
/// differences over all parameters, skipping entries near a kink.
pub fn full_pipeline_error(p: &Problem, eps: f64) -> f64 {
    let emb = forward(&p.params, p.x.view(), &p.tokens).unwrap();
    let base = loss_at(p, &p.params);
    let g = backward(&p.params, p.x.view(), &emb, &base.grad_s).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for which in 0..3 {
        let shape = match which {
            0 => p.params.w_img.dim(),
            1 => p.params.e_word.dim(),
            _ => p.params.w_txt.dim(),
        };
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let perturbed = |d: f64| {
                    let mut q = p.params.clone();
                    match which {
                        0 => q.w_img[[r, c]] += d,
                        1 => q.e_word[[r, c]] += d,
                        _ => q.w_txt[[r, c]] += d,
                    }
                    loss_at(p, &q)
                };
                let (hi, lo) = (perturbed(10.0 * eps), perturbed(-10.0 * eps));
                if !same_structure(&base, &hi) || !same_structure(&base, &lo) {
                    continue;
                }
                let fd = (perturbed(eps).value - perturbed(-eps).value) / (2.0 * eps);
                let an = match which {
                    0 => g.w_img[[r, c]],
                    1 => g.e_word.get(&r).map_or(0.0, |row| row[c]),
                    _ => g.w_txt[[r, c]],
                };
                analytic.push(an);
                numeric.push(fd);
            }
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_problem(seed: u64, variant: LossVariant) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig {
        d_img: 6,
        vocab_size: 9,
        d_word: 5,
        d_emb: 4,
    };
    let params = ModelParams::init(&cfg, seed);
    let x = random_matrix(&mut rng, 4, cfg.d_img, -1.0, 1.0);
    let tokens = (0..4)
        .map(|_| {
            let len = rng.random_range(1..=4);
            (0..len).map(|_| rng.random_range(0..cfg.vocab_size)).collect()
        })
        .collect();
    let (_, f) = random_block(&mut rng, 4, 0.025);
    Problem {
        params,
        x,
        tokens,
        f,
        loss: LossConfig {
            variant,
            ..LossConfig::default()
        },
    }
}

