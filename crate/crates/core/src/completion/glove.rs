//! GloVe over the user co-occurrence matrix.
//!
//! Minimizes `Σ f(X_pq) (g_p·g̃_q + b_p + b̃_q − ln X_pq)²` with
//! `f(x) = min((x/x_max)^α, 1)` by AdaGrad over the stored entries. The
//! exported embedding of a user is the sum of its center and context
//! vectors.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CooccurrenceMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GloveConfig {
    pub dim: usize,
    pub alpha: f64,
    pub x_max: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig { dim: 64, alpha: 0.75, x_max: 100.0, learning_rate: 0.05, epochs: 30 }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.learning_rate <= 0.0 || self.x_max <= 0.0 {
            return Err(Error::Config(format!("invalid glove config {self:?}")));
        }
        Ok(())
    }
}

/// Weighting function `f(x) = min((x/x_max)^α, 1)`.
pub fn weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

/// Trainable state. Kept separate from [`GloveEmbeddings`] because biases and
/// the center/context split matter only while training.
#[derive(Clone, Debug)]
pub struct GloveModel {
    pub dim: usize,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub center_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
    grad_sq: Vec<f64>,
    bias_grad_sq: Vec<f64>,
}

impl GloveModel {
    pub fn new(num_users: usize, dim: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[rng::TAG_GLOVE]);
        let len = num_users * dim;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| (r.gen::<f64>() - 0.5) / dim as f64).collect() };
        let center = draw(len);
        let context = draw(len);
        let center_bias = draw(num_users);
        let context_bias = draw(num_users);
        GloveModel {
            dim,
            center,
            context,
            center_bias,
            context_bias,
            grad_sq: vec![1.0; 2 * len],
            bias_grad_sq: vec![1.0; 2 * num_users],
        }
    }

    /// `g_p · g̃_q + b_p + b̃_q`.
    pub fn predict(&self, p: u32, q: u32) -> f64 {
        let (p, q, d) = (p as usize, q as usize, self.dim);
        crate::numkernel::dot(&self.center[p * d..(p + 1) * d], &self.context[q * d..(q + 1) * d])
            + self.center_bias[p]
            + self.context_bias[q]
    }

    pub fn embeddings(&self) -> GloveEmbeddings {
        let vectors = self.center.iter().zip(&self.context).map(|(a, b)| a + b).collect();
        GloveEmbeddings::new(self.center_bias.len(), self.dim, vectors)
    }

    /// One shuffled AdaGrad pass. Returns the mean weighted squared error
    /// measured before each update.
    fn epoch(&mut self, entries: &[(u32, u32, f64)], cfg: &GloveConfig, order: &[usize]) -> f64 {
        let d = self.dim;
        let n = self.center_bias.len();
        let mut total = 0.0;
        for &k in order {
            let (p, q, x) = entries[k];
            let (p, q) = (p as usize, q as usize);
            let diff = self.predict(p as u32, q as u32) - x.ln();
            let fdiff = weight(x, cfg.x_max, cfg.alpha) * diff;
            total += fdiff * diff;
            for j in 0..d {
                let (ci, xi) = (p * d + j, q * d + j);
                let gc = fdiff * self.context[xi];
                let gx = fdiff * self.center[ci];
                self.center[ci] -= cfg.learning_rate * gc / self.grad_sq[ci].sqrt();
                self.context[xi] -= cfg.learning_rate * gx / self.grad_sq[n * d + xi].sqrt();
                self.grad_sq[ci] += gc * gc;
                self.grad_sq[n * d + xi] += gx * gx;
            }
            self.center_bias[p] -= cfg.learning_rate * fdiff / self.bias_grad_sq[p].sqrt();
            self.context_bias[q] -= cfg.learning_rate * fdiff / self.bias_grad_sq[n + q].sqrt();
            self.bias_grad_sq[p] += fdiff * fdiff;
            self.bias_grad_sq[n + q] += fdiff * fdiff;
        }
        total / entries.len().max(1) as f64
    }
}

/// Per-epoch mean weighted squared error.
#[derive(Clone, Debug, Default)]
pub struct GloveReport {
    pub epoch_losses: Vec<f64>,
}

/// Trains GloVe on `x`. Fails if the matrix is empty or the loss diverges.
pub fn train_glove(x: &CooccurrenceMatrix, cfg: &GloveConfig, seed: u64) -> Result<(GloveModel, GloveReport)> {
    let entries: Vec<(u32, u32, f64)> = x.entries().map(|(p, q, c)| (p, q, c as f64)).collect();
    train_glove_entries(x.num_users(), &entries, cfg, seed)
}

/// Same as [`train_glove`] over explicit `(p, q, X_pq)` entries, which need
/// not be integral.
pub fn train_glove_entries(
    num_users: usize,
    entries: &[(u32, u32, f64)],
    cfg: &GloveConfig,
    seed: u64,
) -> Result<(GloveModel, GloveReport)> {
    cfg.validate()?;
    if entries.is_empty() {
        return Err(Error::Training("co-occurrence matrix is empty; no shared items in training data".into()));
    }
    if let Some(bad) = entries.iter().find(|e| !(e.2 > 0.0)) {
        return Err(Error::Argument(format!("co-occurrence entry {bad:?} is not positive")));
    }
    let mut model = GloveModel::new(num_users, cfg.dim, seed);
    let mut report = GloveReport::default();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, &[rng::TAG_GLOVE, epoch as u64]));
        let loss = model.epoch(entries, cfg, &order);
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "glove loss diverged at epoch {}; try a smaller learning rate than {}",
                epoch + 1,
                cfg.learning_rate
            )));
        }
        log::debug!("glove epoch {} loss {loss:.6}", epoch + 1);
        report.epoch_losses.push(loss);
    }
    Ok((model, report))
}

/// `n × dim` user embeddings. Row reads are counted so that callers can
/// verify which pipelines touch them.
#[derive(Debug, Serialize, Deserialize)]
pub struct GloveEmbeddings {
    num_users: usize,
    dim: usize,
    vectors: Vec<f64>,
    #[serde(skip)]
    reads: AtomicU64,
}

impl Clone for GloveEmbeddings {
    fn clone(&self) -> Self {
        GloveEmbeddings::new(self.num_users, self.dim, self.vectors.clone())
    }
}

impl GloveEmbeddings {
    pub fn new(num_users: usize, dim: usize, vectors: Vec<f64>) -> Self {
        assert_eq!(vectors.len(), num_users * dim);
        GloveEmbeddings { num_users, dim, vectors, reads: AtomicU64::new(0) }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, p: u32) -> &[f64] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let p = p as usize;
        &self.vectors[p * self.dim..(p + 1) * self.dim]
    }

    /// Number of row reads so far.
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().all(|v| v.is_finite())
    }
}
