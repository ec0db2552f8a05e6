use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_negatives, Dataset, Granularity, SessionSequence, Split, SplitAssignment};
use crate::error::Result;
use crate::rng;

/// One target event with the sessions the model reads to predict it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub event: usize,
    pub user: u32,
    /// Positions in the user's training session sequence, oldest first.
    pub context: Vec<usize>,
    pub window: i64,
    pub positive: u32,
    pub negatives: Vec<u32>,
}

/// Counts of built and skipped instances.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub built: usize,
    /// Target events whose user has no training session before them.
    pub skipped: usize,
}

/// The `t` most recent sessions strictly before `window`, padded at the
/// front by repeating the earliest one. `None` when there is none.
pub fn context_positions(seq: &SessionSequence, window: i64, t: usize) -> Option<Vec<usize>> {
    let k = seq.count_before(window);
    if k == 0 {
        return None;
    }
    let start = k.saturating_sub(t);
    let mut ctx = vec![start; t.saturating_sub(k)];
    ctx.extend(start..k);
    Some(ctx)
}

/// Instances for every event labeled `which`, without negatives. Contexts
/// come from `train_sessions`, which should contain training events only.
pub fn build_instances(
    ds: &Dataset,
    split: &SplitAssignment,
    which: Split,
    train_sessions: &[SessionSequence],
    granularity: Granularity,
    sessions: usize,
) -> (Vec<Instance>, InstanceReport) {
    let mut out = Vec::new();
    let mut report = InstanceReport::default();
    for (idx, e) in ds.events().iter().enumerate() {
        if split.label(idx) != which {
            continue;
        }
        let window = granularity.window(e.timestamp);
        match context_positions(&train_sessions[e.user as usize], window, sessions) {
            Some(context) => {
                report.built += 1;
                out.push(Instance { event: idx, user: e.user, context, window, positive: e.item, negatives: Vec::new() });
            }
            None => report.skipped += 1,
        }
    }
    (out, report)
}

/// Replaces each instance's negatives with `count` fresh unrated items,
/// seeded by `(seed, epoch, event)`.
pub fn draw_training_negatives(
    ds: &Dataset,
    instances: &mut [Instance],
    count: usize,
    seed: u64,
    epoch: u64,
) -> Result<()> {
    instances.par_iter_mut().try_for_each(|inst| {
        let s = rng::derive(seed, &[rng::TAG_NEG_TRAIN, epoch, inst.event as u64]);
        inst.negatives = sample_negatives(ds, inst.user, count, s)?;
        Ok(())
    })
}

/// Training instances with `negatives` sampled items each.
pub fn make_training_instances(
    ds: &Dataset,
    split: &SplitAssignment,
    train_sessions: &[SessionSequence],
    granularity: Granularity,
    sessions: usize,
    negatives: usize,
    seed: u64,
) -> Result<(Vec<Instance>, InstanceReport)> {
    let (mut instances, report) = build_instances(ds, split, Split::Train, train_sessions, granularity, sessions);
    draw_training_negatives(ds, &mut instances, negatives, seed, 0)?;
    Ok((instances, report))
}
