//! Sampled-negative ranking evaluation.
//!
//! Each target event is ranked against up to `negatives` items the user never
//! interacted with, drawn afresh for each of `repeats` repeats. Metrics are
//! averaged over instances within a repeat, then over repeats.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_negatives, Dataset};
use crate::error::{Error, Result};
use crate::model::{DreamModel, Inputs, Instance};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub negatives: usize,
    pub repeats: usize,
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { negatives: 1000, repeats: 10, k: 10 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 || self.repeats == 0 || self.k == 0 {
            return Err(Error::Config("negatives, repeats and k must be positive".into()));
        }
        Ok(())
    }

    /// Whether this is the standard ten-repeat protocol.
    pub fn is_standard(&self) -> bool {
        self.repeats == 10 && self.negatives == 1000
    }
}

/// 1-based rank of `scores[0]` among `scores`. Ties count against it.
pub fn rank(scores: &[f64]) -> Result<usize> {
    let (&pos, rest) = scores.split_first().ok_or_else(|| Error::Evaluation("no candidates to rank".into()))?;
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Evaluation(format!("candidate {bad} has non-finite score {}", scores[bad])));
    }
    Ok(1 + rest.iter().filter(|&&s| s >= pos).count())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    /// Full-list NDCG, `1 / log2(rank + 1)` with a single relevant item.
    pub ndcg: f64,
    pub mrr: f64,
    /// NDCG truncated at the cutoff.
    pub ndcg_at_k: f64,
}

/// Averages of Recall@k, NDCG, MRR and NDCG@k over `ranks`.
pub fn metrics(ranks: &[usize], k: usize) -> Metrics {
    if ranks.is_empty() {
        return Metrics::default();
    }
    let n = ranks.len() as f64;
    let mut m = Metrics::default();
    for &r in ranks {
        let gain = 1.0 / ((r + 1) as f64).log2();
        if r <= k {
            m.recall += 1.0;
            m.ndcg_at_k += gain;
        }
        m.ndcg += gain;
        m.mrr += 1.0 / r as f64;
    }
    Metrics { recall: m.recall / n, ndcg: m.ndcg / n, mrr: m.mrr / n, ndcg_at_k: m.ndcg_at_k / n }
}

fn mean_of(all: &[Metrics]) -> Metrics {
    let n = all.len().max(1) as f64;
    let sum = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Metrics { recall: sum(|m| m.recall), ndcg: sum(|m| m.ndcg), mrr: sum(|m| m.mrr), ndcg_at_k: sum(|m| m.ndcg_at_k) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub mean: Metrics,
    pub per_repeat: Vec<Metrics>,
    pub evaluated: usize,
    pub skipped: usize,
    /// Fewest negatives any instance was ranked against.
    pub min_negatives: usize,
    pub negatives: usize,
    /// False when the protocol deviates from 1000 negatives × 10 repeats.
    pub standard: bool,
}

impl MetricsReport {
    /// Aligned text table with R@k, NDCG, MRR and NDCG@k columns.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let k = self.k;
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8} {:>9}", "", format!("R@{k}"), "NDCG", "MRR", format!("NDCG@{k}"));
        let mut row = |label: &str, m: &Metrics| {
            let _ = writeln!(s, "{label:<10} {:>8.5} {:>8.5} {:>8.5} {:>9.5}", m.recall, m.ndcg, m.mrr, m.ndcg_at_k);
        };
        row("mean", &self.mean);
        for (i, m) in self.per_repeat.iter().enumerate() {
            row(&format!("repeat {}", i + 1), m);
        }
        let _ = write!(s, "evaluated {} skipped {} negatives {}", self.evaluated, self.skipped, self.negatives);
        if self.min_negatives < self.negatives {
            let _ = write!(s, " (capped at {} by catalog size)", self.min_negatives);
        }
        if !self.standard {
            let _ = write!(s, " [non-standard protocol]");
        }
        s.push('\n');
        s
    }
}

/// Assigns scores to candidate items of an instance. `candidates[0]` is the
/// held-out positive.
pub trait Scorer: Sync {
    fn score(&self, instance: usize, repeat: usize, candidates: &[u32]) -> Result<Vec<f64>>;
}

/// Scores with a trained model; user representations are computed once per
/// instance.
pub struct ModelScorer<'a> {
    model: &'a DreamModel,
    reps: Vec<Vec<f64>>,
}

/// Instances per inference tape.
const EVAL_CHUNK: usize = 64;

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a DreamModel, inputs: &Inputs, instances: &[Instance]) -> Result<Self> {
        let chunks: Vec<Vec<Vec<f64>>> = instances
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| {
                let refs: Vec<&Instance> = chunk.iter().collect();
                model.representations(inputs, &refs)
            })
            .collect::<Result<_>>()?;
        Ok(ModelScorer { model, reps: chunks.into_iter().flatten().collect() })
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, instance: usize, _repeat: usize, candidates: &[u32]) -> Result<Vec<f64>> {
        Ok(self.model.score_items(&self.reps[instance], candidates))
    }
}

/// Independent uniform scores per (instance, repeat, candidate).
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn score(&self, instance: usize, repeat: usize, candidates: &[u32]) -> Result<Vec<f64>> {
        let mut r = rng::stream(self.seed, &[instance as u64, repeat as u64]);
        Ok(candidates.iter().map(|_| r.gen::<f64>()).collect())
    }
}

/// Gives the positive the largest finite score and everything else zero.
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn score(&self, _instance: usize, _repeat: usize, candidates: &[u32]) -> Result<Vec<f64>> {
        Ok((0..candidates.len()).map(|i| if i == 0 { f64::MAX } else { 0.0 }).collect())
    }
}

/// Negatives of instance `inst` for `repeat`: `min(count, unrated)` items.
pub fn eval_negatives(ds: &Dataset, inst: &Instance, count: usize, seed: u64, repeat: usize) -> Result<Vec<u32>> {
    let available = ds.num_items() - ds.interacted(inst.user).len();
    let s = rng::derive(seed, &[rng::TAG_NEG_EVAL, inst.event as u64, repeat as u64]);
    sample_negatives(ds, inst.user, count.min(available), s)
}

/// Runs the protocol over `instances` with negatives seeded by `seed`.
/// `skipped` counts target events dropped before scoring (for the report).
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    ds: &Dataset,
    instances: &[Instance],
    skipped: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut per_repeat = Vec::with_capacity(cfg.repeats);
    let mut min_negatives = usize::MAX;
    let mut evaluated = 0;
    let mut dropped = 0;
    for repeat in 0..cfg.repeats {
        let outcomes: Vec<Option<(usize, usize)>> = instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                let negs = eval_negatives(ds, inst, cfg.negatives, seed, repeat)?;
                if negs.is_empty() {
                    return Ok(None);
                }
                let mut cands = Vec::with_capacity(negs.len() + 1);
                cands.push(inst.positive);
                cands.extend_from_slice(&negs);
                let scores = scorer.score(i, repeat, &cands)?;
                if scores.len() != cands.len() {
                    return Err(Error::Evaluation(format!(
                        "scorer returned {} scores for {} candidates",
                        scores.len(),
                        cands.len()
                    )));
                }
                Ok(Some((rank(&scores)?, negs.len())))
            })
            .collect::<Result<_>>()?;
        let ranks: Vec<usize> = outcomes.iter().flatten().map(|o| o.0).collect();
        min_negatives = outcomes.iter().flatten().map(|o| o.1).fold(min_negatives, usize::min);
        evaluated = ranks.len();
        dropped = outcomes.len() - ranks.len();
        per_repeat.push(metrics(&ranks, cfg.k));
    }
    if evaluated == 0 {
        return Err(Error::Evaluation("no evaluable instances".into()));
    }
    Ok(MetricsReport {
        k: cfg.k,
        mean: mean_of(&per_repeat),
        per_repeat,
        evaluated,
        skipped: skipped + dropped,
        min_negatives,
        negatives: cfg.negatives,
        standard: cfg.is_standard(),
    })
}
