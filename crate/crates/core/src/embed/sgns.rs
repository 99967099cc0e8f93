//! Skip-gram with negative sampling over a walk corpus.

use num_traits::Float;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rng::RngStream;
use crate::walker::WalkCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub noise_exponent: f64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 20,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 1e-4,
            noise_exponent: 0.75,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dim >= 2
            && self.window >= 1
            && self.negatives >= 1
            && self.epochs >= 1
            && self.lr_start > self.lr_end
            && self.lr_end > 0.0
            && self.noise_exponent.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid SGNS config {self:?}")))
        }
    }
}

/// Center ("input") and context ("output") vectors, row-major `n x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub n: usize,
    pub dim: usize,
    pub vectors: Vec<f32>,
    pub context_vectors: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn zeros(n: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            n,
            dim,
            vectors: vec![0.0; n * dim],
            context_vectors: vec![0.0; n * dim],
        }
    }

    /// Builds a matrix holding only center vectors (context vectors zero).
    pub fn from_vectors(n: usize, dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if vectors.len() != n * dim {
            return Err(Error::Shape {
                expected: format!("{n}x{dim}"),
                actual: format!("{} values", vectors.len()),
            });
        }
        Ok(EmbeddingMatrix { n, dim, vectors, context_vectors: vec![0.0; n * dim] })
    }

    pub fn vector(&self, node: NodeId) -> &[f32] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    pub fn context_vector(&self, node: NodeId) -> &[f32] {
        &self.context_vectors[node * self.dim..(node + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsReport {
    /// Nodes absent from the corpus; their vectors are zero.
    pub unvisited: Vec<NodeId>,
    pub pairs_per_epoch: usize,
    /// Mean negative log-likelihood per positive pair, per epoch.
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Negative = 0,
    Positive = 1,
}

pub fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `log sigma(u.v)` for a positive pair, `log sigma(-u.v)` for a negative one.
pub fn pair_objective<F: Float>(v: &[F], u: &[F], label: PairLabel) -> F {
    let d = dot(v, u);
    let x = match label {
        PairLabel::Positive => d,
        PairLabel::Negative => -d,
    };
    // log sigma(x) = -log(1 + e^-x), split to stay finite for large |x|
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `label - sigma(dot)`: the scalar shared by both halves of the gradient.
#[inline]
pub fn pair_coefficient<F: Float>(dot: F, label: PairLabel) -> F {
    let target = match label {
        PairLabel::Positive => F::one(),
        PairLabel::Negative => F::zero(),
    };
    target - sigmoid(dot)
}

/// Gradient of [`pair_objective`] with respect to `v` and `u`.
pub fn sgns_pair_gradient<F: Float>(v: &[F], u: &[F], label: PairLabel) -> (Vec<F>, Vec<F>) {
    let g = pair_coefficient(dot(v, u), label);
    let grad_v = u.iter().map(|&x| g * x).collect();
    let grad_u = v.iter().map(|&x| g * x).collect();
    (grad_v, grad_u)
}

#[inline]
fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `dot` with four interleaved partial sums so the inner loop vectorizes.
#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let (ca, ra) = a.as_chunks::<4>();
    let (cb, rb) = b[..a.len()].as_chunks::<4>();
    let mut acc = [0f32; 4];
    for (x, y) in ca.iter().zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f32 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    let (cy, ry) = y.as_chunks_mut::<4>();
    let (cx, rx) = x[..cy.len() * 4 + ry.len()].as_chunks::<4>();
    for (ys, xs) in cy.iter_mut().zip(cx) {
        for l in 0..4 {
            ys[l] += alpha * xs[l];
        }
    }
    for (yi, &xi) in ry.iter_mut().zip(rx) {
        *yi += alpha * xi;
    }
}

fn pairs_in_walk(len: usize, window: usize) -> usize {
    (0..len)
        .map(|t| t.min(window) + (len - 1 - t).min(window))
        .sum()
}

/// Trains center and context vectors with plain SGD, one update per
/// (token, context offset) pair, single-threaded.
///
/// Negatives are drawn from corpus unigram counts raised to
/// `noise_exponent`; a draw equal to the positive context is skipped. The
/// learning rate falls linearly from `lr_start` to `lr_end` across all
/// updates of all epochs.
pub fn train_sgns(corpus: &WalkCorpus, cfg: &SgnsConfig, rng: &mut RngStream) -> Result<(EmbeddingMatrix, SgnsReport)> {
    cfg.validate()?;
    let n = corpus.source_node_count;
    if corpus.token_count() == 0 || n == 0 {
        return Err(Error::Empty("walk corpus has no tokens"));
    }
    let dim = cfg.dim;

    let mut counts = vec![0u64; n];
    for walk in &corpus.walks {
        for &v in walk {
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, node_count: n });
            }
            counts[v] += 1;
        }
    }
    let unvisited: Vec<NodeId> = (0..n).filter(|&v| counts[v] == 0).collect();
    if !unvisited.is_empty() {
        log::debug!("{} of {n} nodes never visited; their vectors stay zero", unvisited.len());
    }
    let noise = WeightedAliasIndex::new(
        counts.iter().map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(cfg.noise_exponent) }).collect(),
    )
    .map_err(|e| Error::InvalidParams(format!("noise distribution: {e}")))?;

    let mut emb = EmbeddingMatrix::zeros(n, dim);
    let half_range = 0.5 / dim as f32;
    for v in 0..n {
        if counts[v] == 0 {
            continue;
        }
        for x in &mut emb.vectors[v * dim..(v + 1) * dim] {
            *x = rng.random_range(-half_range..half_range);
        }
    }

    let pairs_per_epoch: usize = corpus.walks.iter().map(|w| pairs_in_walk(w.len(), cfg.window)).sum();
    let total_updates = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let lr_span = cfg.lr_start - cfg.lr_end;

    let mut grad_v = vec![0f32; dim];
    let mut center = vec![0f32; dim];
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut done: usize = 0;

    for epoch in 0..cfg.epochs {
        let mut loss = 0.0f64;
        for walk in &corpus.walks {
            for (t, &w) in walk.iter().enumerate() {
                let lo = t.saturating_sub(cfg.window);
                let hi = (t + cfg.window).min(walk.len() - 1);
                for pos in lo..=hi {
                    if pos == t {
                        continue;
                    }
                    let ctx = walk[pos];
                    let lr = (cfg.lr_start - lr_span * done as f64 / total_updates) as f32;
                    done += 1;

                    center.copy_from_slice(&emb.vectors[w * dim..(w + 1) * dim]);
                    grad_v.iter_mut().for_each(|g| *g = 0.0);

                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, PairLabel::Positive)
                        } else {
                            let neg = noise.sample(rng);
                            if neg == ctx {
                                continue;
                            }
                            (neg, PairLabel::Negative)
                        };
                        let u = &mut emb.context_vectors[target * dim..(target + 1) * dim];
                        let d = dot_f32(&center, u);
                        let s = sigmoid(d);
                        let p = if label == PairLabel::Positive { s } else { 1.0 - s };
                        // ln of the probability unless it has underflowed
                        loss -= if p > 1e-30 { p.ln() as f64 } else { pair_objective_from_dot(d as f64, label) };
                        let g = lr * (label as u8 as f32 - s);
                        axpy(g, u, &mut grad_v);
                        axpy(g, &center, u);
                    }
                    axpy(1.0, &grad_v, &mut emb.vectors[w * dim..(w + 1) * dim]);
                }
            }
        }
        let mean = loss / pairs_per_epoch.max(1) as f64;
        if !mean.is_finite() || emb.vectors.iter().any(|x| !x.is_finite()) {
            let max_norm = (0..n)
                .map(|v| emb.vector(v).iter().map(|x| (x * x) as f64).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            return Err(Error::EmbeddingDiverged(format!(
                "epoch {epoch}: mean loss {mean}, max center-vector norm {max_norm}, lr_start {}",
                cfg.lr_start
            )));
        }
        epoch_loss.push(mean);
    }

    Ok((emb, SgnsReport { unvisited, pairs_per_epoch, epoch_loss }))
}

fn pair_objective_from_dot(d: f64, label: PairLabel) -> f64 {
    pair_objective(&[d], &[1.0], label)
}
