//! Mini-batch Adam training with validation-based early stopping.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::completion::SocialContext;
use crate::data::{Dataset, SessionSequence};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalConfig, ModelScorer};
use crate::model::{draw_training_negatives, DreamModel, Inputs, Instance};
use crate::params::ParamStore;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2: f64,
    /// Global gradient-norm clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Sampled negatives per training positive.
    pub negatives: usize,
    /// Draw fresh training negatives every epoch.
    pub resample_negatives: bool,
    /// Negatives per validation instance (one fixed repeat).
    pub validation_negatives: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            l2: 1e-5,
            clip_norm: Some(5.0),
            negatives: 4,
            resample_negatives: true,
            validation_negatives: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.negatives == 0 || self.validation_negatives == 0 {
            return Err(Error::Config("batch_size, patience, negatives and validation_negatives must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }

    /// One bias-corrected Adam update from the store's gradients.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Dimension(format!("adam state for {} tensors, store has {}", self.m.len(), store.len())));
        }
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let (value, grad) = store.value_and_grad_mut(id);
            if m.len() != value.len() {
                return Err(Error::Dimension(format!("adam moment of length {} for tensor of {}", m.len(), value.len())));
            }
            for (((theta, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *theta -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_recall: Option<f64>,
    pub seconds: f64,
}

/// Writes `epoch,train_loss,val_recall10` rows. Wall-clock time is left out
/// so reruns produce identical files.
pub fn write_history_csv<W: Write>(mut out: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_recall10")?;
    for r in history {
        let val = r.val_recall.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, val)?;
    }
    Ok(())
}

/// Everything training reads besides the model.
pub struct TrainData<'a> {
    pub ds: &'a Dataset,
    pub sessions: &'a [SessionSequence],
    pub social: &'a SocialContext,
    pub train: Vec<Instance>,
    pub valid: Vec<Instance>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (of the last epoch when there
    /// is no validation data).
    pub model: DreamModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_recall: Option<f64>,
    pub stopped_early: bool,
}

/// Recall@10 on `valid` with one fixed repeat of negatives.
pub fn validation_recall(model: &DreamModel, data: &TrainData, negatives: usize, seed: u64) -> Result<f64> {
    let inputs = Inputs { sessions: data.sessions, social: data.social, epoch: None };
    let scorer = ModelScorer::new(model, &inputs, &data.valid)?;
    let cfg = EvalConfig { negatives, repeats: 1, k: 10 };
    Ok(evaluate(&scorer, data.ds, &data.valid, 0, &cfg, rng::derive(seed, &[0x5641_4c49]))?.mean.recall)
}

fn training_failure(epoch: usize, batch: usize, what: String) -> Error {
    Error::Training(format!("epoch {epoch}, batch {batch}: {what}"))
}

/// Trains `model`; see [`TrainOutcome`].
pub fn train(mut model: DreamModel, mut data: TrainData, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Training("no training instances".into()));
    }
    let mut adam = AdamState::new(&model.store);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, DreamModel)> = None;
    let mut bad_epochs = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        if cfg.resample_negatives || data.train[0].negatives.len() != cfg.negatives {
            let e = if cfg.resample_negatives { epoch as u64 - 1 } else { 0 };
            draw_training_negatives(data.ds, &mut data.train, cfg.negatives, seed, e)?;
        }
        order.shuffle(&mut rng::stream(seed, &[rng::TAG_SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &data.train[i]).collect();
            let inputs = Inputs { sessions: data.sessions, social: data.social, epoch: Some(epoch as u64) };
            model.store.zero_grad();
            let out = match model.accumulate_gradients(&inputs, &batch, cfg.l2) {
                Err(Error::NonFinite { op }) => {
                    let at = model.store.first_non_finite().unwrap_or("an intermediate value").to_owned();
                    return Err(training_failure(epoch, b + 1, format!("non-finite value in {op} (tensor {at})")));
                }
                other => other?,
            };
            if !out.loss.is_finite() {
                return Err(training_failure(epoch, b + 1, format!("loss is {}", out.loss)));
            }
            if let Some(name) = model.store.first_non_finite_grad() {
                return Err(training_failure(epoch, b + 1, format!("non-finite gradient in tensor {name}")));
            }
            if let Some(limit) = cfg.clip_norm {
                let norm = model.store.global_grad_norm();
                if norm > limit {
                    model.store.scale_grads(limit / norm);
                }
            }
            adam.step(&mut model.store, cfg.learning_rate)?;
            if let Some(name) = model.store.first_non_finite() {
                return Err(training_failure(epoch, b + 1, format!("tensor {name} diverged")));
            }
            model.update_running_stats(&out.norm_stats);
            total += out.loss;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        let val_recall = if data.valid.is_empty() {
            None
        } else {
            Some(validation_recall(&model, &data, cfg.validation_negatives, seed)?)
        };
        let seconds = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch} loss {train_loss:.5} val R@10 {} ({seconds:.1}s)",
            val_recall.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
        );
        history.push(EpochRecord { epoch, train_loss, val_recall, seconds });
        let Some(recall) = val_recall else { continue };
        if best.as_ref().is_none_or(|(r, _, _)| recall > *r) {
            best = Some((recall, epoch, model.clone()));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(match best {
        Some((recall, epoch, best_model)) => {
            TrainOutcome { model: best_model, history, best_epoch: epoch, best_recall: Some(recall), stopped_early }
        }
        None => {
            let last = history.len();
            TrainOutcome { model, history, best_epoch: last, best_recall: None, stopped_early }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Tensor;

    fn single(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.register("x", Tensor::vector(vec![value])).unwrap();
        s.grad_mut(id).data_mut()[0] = grad;
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = single(1.5, 0.0);
        let mut a = AdamState::new(&s);
        for _ in 0..5 {
            a.step(&mut s, 0.1).unwrap();
        }
        assert_eq!(s.value(s.id("x").unwrap()).data(), &[1.5]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut s = single(1.5, 3.0);
        let mut a = AdamState::new(&s);
        for _ in 0..5 {
            a.step(&mut s, 0.0).unwrap();
        }
        assert_eq!(s.value(s.id("x").unwrap()).data(), &[1.5]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // Loss x², x = 3: g = 6. After bias correction m̂ = g and v̂ = g², so the
        // update is lr·g/(|g| + ε).
        let mut s = single(3.0, 6.0);
        let mut a = AdamState::new(&s);
        let lr = 1e-3;
        a.step(&mut s, lr).unwrap();
        let expect = 3.0 - lr * 6.0 / (6.0 + ADAM_EPS);
        let got = s.value(s.id("x").unwrap()).data()[0];
        assert!((got - expect).abs() < 1e-15);
        assert!(((3.0 - got) - lr).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let mut s = single(0.0, -0.25);
        let mut a = AdamState::new(&s);
        let lr = 0.01;
        let mut prev = 0.0;
        for _ in 0..200 {
            a.step(&mut s, lr).unwrap();
            let x = s.value(s.id("x").unwrap()).data()[0];
            assert!(((x - prev) - lr).abs() < 1e-6);
            prev = x;
        }
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut s = single(0.0, 1.0);
        let mut a = AdamState::new(&ParamStore::new());
        assert!(matches!(a.step(&mut s, 0.1), Err(Error::Dimension(_))));
    }

    #[test]
    fn history_csv_layout() {
        let mut buf = Vec::new();
        let h = vec![
            EpochRecord { epoch: 1, train_loss: 0.5, val_recall: Some(0.25), seconds: 1.0 },
            EpochRecord { epoch: 2, train_loss: 0.4, val_recall: None, seconds: 2.0 },
        ];
        write_history_csv(&mut buf, &h).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_recall10\n1,0.5,0.25\n2,0.4,\n");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { clip_norm: Some(0.0), ..TrainConfig::default() }.validate().is_err());
    }
}
