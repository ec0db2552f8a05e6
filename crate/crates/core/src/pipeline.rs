//! End-to-end runs: data preparation, graph completion, training,
//! evaluation and ablation, all seeded from the run's root seed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::completion::{
    build_cooccurrence, pair_log_partition, train_glove, write_edges_tsv, GloveEmbeddings, GloveReport,
    SocialContext, VirtualFriends,
};
use crate::config::{DataConfig, RunConfig};
use crate::data::{segment_where, Dataset, Granularity, SessionSequence, Split, SplitAssignment};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalConfig, MetricsReport, ModelScorer, OracleScorer, RandomScorer};
use crate::model::{build_instances, Checkpoint, DreamModel, Inputs, InstanceReport, Variant, VariantConfig};
use crate::rng;
use crate::synthetic;
use crate::trainer::{train, TrainData, TrainOutcome};

/// Seeds of the independent random streams of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub glove: u64,
    pub friends: u64,
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Seeds {
            data: rng::derive(root, &[0x4441_5441]),
            split: rng::derive(root, &[rng::TAG_SPLIT]),
            glove: rng::derive(root, &[rng::TAG_GLOVE]),
            friends: rng::derive(root, &[rng::TAG_REAL_FRIENDS]),
            init: rng::derive(root, &[rng::TAG_INIT]),
            train: rng::derive(root, &[rng::TAG_SHUFFLE]),
            eval: rng::derive(root, &[rng::TAG_NEG_EVAL]),
        }
    }
}

/// Reads the configured files, or generates the synthetic dataset.
pub fn load_dataset(cfg: &DataConfig, seed: u64) -> Result<Dataset> {
    match &cfg.events {
        Some(events) => Dataset::ingest(events, cfg.social.as_deref()),
        None => synthetic::planted(&cfg.synthetic, seed),
    }
}

/// A dataset with its split and training sessions.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub ds: Dataset,
    pub split: SplitAssignment,
    pub granularity: Granularity,
    /// Sessions built from training events only.
    pub train_sessions: Vec<SessionSequence>,
}

impl Prepared {
    pub fn new(ds: Dataset, split: SplitAssignment, granularity: Granularity) -> Self {
        let train_sessions = segment_where(&ds, granularity, |i| split.label(i) == Split::Train);
        Prepared { ds, split, granularity, train_sessions }
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let seeds = Seeds::from_root(cfg.seed);
    let ds = load_dataset(&cfg.data, seeds.data)?;
    let split = SplitAssignment::random(ds.events().len(), cfg.data.split, seeds.split)?;
    Ok(Prepared::new(ds, split, cfg.data.granularity))
}

/// Which friend sources a run touched.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessReport {
    pub edge_lists_built: bool,
    pub glove_trained: bool,
    pub real_reads: u64,
    pub virtual_reads: u64,
    pub glove_reads: u64,
}

/// Friend sources of one variant.
#[derive(Debug)]
pub struct Social {
    pub context: SocialContext,
    pub glove: Option<GloveEmbeddings>,
    pub glove_report: Option<GloveReport>,
    edge_lists_built: bool,
}

impl Social {
    pub fn access(&self) -> AccessReport {
        AccessReport {
            edge_lists_built: self.edge_lists_built,
            glove_trained: self.glove_report.is_some(),
            real_reads: self.context.real_reads(),
            virtual_reads: self.context.virtual_reads(),
            glove_reads: self.glove.as_ref().map_or(0, |g| g.reads()),
        }
    }
}

/// Builds the friend sources `variant` needs, training GloVe on training
/// co-occurrences only when virtual friends are used.
pub fn build_social(prep: &Prepared, variant: &VariantConfig, cfg: &RunConfig) -> Result<Social> {
    let seeds = Seeds::from_root(cfg.seed);
    let real = variant.use_real.then(|| SocialContext::real_lists(&prep.ds));
    let (glove, glove_report, virtual_friends) = if variant.use_virtual {
        let x = build_cooccurrence(&prep.ds, Some(&prep.split));
        let (model, report) = train_glove(&x, &cfg.glove, seeds.glove)?;
        let g = model.embeddings();
        if !g.is_finite() {
            return Err(Error::Training("glove produced non-finite embeddings".into()));
        }
        let vf = VirtualFriends::select_all(&g, cfg.completion.k_virtual, real.as_deref());
        (Some(g), Some(report), Some(vf))
    } else {
        (None, None, None)
    };
    let edge_lists_built = real.is_some();
    let context = SocialContext::new(real, virtual_friends, cfg.completion.clone(), seeds.friends);
    Ok(Social { context, glove, glove_report, edge_lists_built })
}

/// Friend sources for a saved model: real lists from the dataset and the
/// virtual lists stored with the checkpoint.
pub fn social_from_parts(
    prep: &Prepared,
    variant: &VariantConfig,
    cfg: &RunConfig,
    virtual_friends: Option<VirtualFriends>,
) -> Result<Social> {
    if variant.use_virtual && virtual_friends.is_none() {
        return Err(Error::Checkpoint("variant uses virtual friends but none were stored".into()));
    }
    let real = variant.use_real.then(|| SocialContext::real_lists(&prep.ds));
    let edge_lists_built = real.is_some();
    let vf = if variant.use_virtual { virtual_friends } else { None };
    let context = SocialContext::new(real, vf, cfg.completion.clone(), Seeds::from_root(cfg.seed).friends);
    Ok(Social { context, glove: None, glove_report: None, edge_lists_built })
}

/// A finished training run.
#[derive(Debug)]
pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub social: Social,
    pub train_report: InstanceReport,
    pub valid_report: InstanceReport,
}

/// Trains the configured variant on `prep`.
pub fn train_run(prep: &Prepared, cfg: &RunConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let seeds = Seeds::from_root(cfg.seed);
    let variant = cfg.variant_config();
    let social = build_social(prep, &variant, cfg)?;
    let t = variant.sessions;
    let (train_instances, train_report) =
        build_instances(&prep.ds, &prep.split, Split::Train, &prep.train_sessions, prep.granularity, t);
    let (valid, valid_report) =
        build_instances(&prep.ds, &prep.split, Split::Valid, &prep.train_sessions, prep.granularity, t);
    log::info!(
        "{}: {} training instances ({} skipped), {} validation ({} skipped)",
        cfg.variant.name,
        train_report.built,
        train_report.skipped,
        valid_report.built,
        valid_report.skipped
    );
    let model = DreamModel::new(prep.ds.num_users(), prep.ds.num_items(), cfg.model.clone(), variant, seeds.init)?;
    let data = TrainData {
        ds: &prep.ds,
        sessions: &prep.train_sessions,
        social: &social.context,
        train: train_instances,
        valid,
    };
    let outcome = train(model, data, &cfg.train, seeds.train)?;
    let access = social.access();
    log::info!(
        "{} access counters: real reads {}, virtual reads {}, glove reads {}, glove trained {}",
        cfg.variant.name,
        access.real_reads,
        access.virtual_reads,
        access.glove_reads,
        access.glove_trained
    );
    Ok(TrainRun { outcome, social, train_report, valid_report })
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    run: RunConfig,
    virtual_friends: Option<VirtualFriends>,
    best_epoch: usize,
    best_recall: Option<f64>,
}

/// Checkpoint of the best model with everything needed to evaluate it. The
/// output directory is left out so the file does not depend on where it is
/// written.
pub fn checkpoint(run: &TrainRun, cfg: &RunConfig) -> Result<Checkpoint> {
    let meta = CheckpointMeta {
        run: RunConfig { output_dir: None, ..cfg.clone() },
        virtual_friends: run.social.context.virtual_friends().cloned(),
        best_epoch: run.outcome.best_epoch,
        best_recall: run.outcome.best_recall,
    };
    let metadata = serde_json::to_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(Checkpoint { model: run.outcome.model.clone(), metadata })
}

/// Run configuration and virtual friends stored in a checkpoint.
pub fn checkpoint_context(ck: &Checkpoint) -> Result<(RunConfig, Option<VirtualFriends>)> {
    let meta: CheckpointMeta = serde_json::from_value(ck.metadata.clone())
        .map_err(|e| Error::Checkpoint(format!("checkpoint metadata: {e}")))?;
    meta.run.validate()?;
    Ok((meta.run, meta.virtual_friends))
}

/// What assigns scores during evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Model,
    /// Always ranks the positive first; an upper bound for the protocol.
    Oracle,
    /// Uniform random scores; the chance baseline.
    Random,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(ScorerKind::Model),
            "oracle" => Ok(ScorerKind::Oracle),
            "random" => Ok(ScorerKind::Random),
            _ => Err(Error::Config(format!("unknown scorer {s:?} (model, oracle, random)"))),
        }
    }
}

/// Evaluates `model` on the `which` split.
pub fn evaluate_model(
    prep: &Prepared,
    model: &DreamModel,
    social: &SocialContext,
    which: Split,
    eval: &EvalConfig,
    root: u64,
) -> Result<MetricsReport> {
    evaluate_with(prep, model, social, which, eval, root, ScorerKind::Model)
}

/// Evaluates on the `which` split with the chosen scorer. Candidates are
/// the same whichever scorer is used.
pub fn evaluate_with(
    prep: &Prepared,
    model: &DreamModel,
    social: &SocialContext,
    which: Split,
    eval: &EvalConfig,
    root: u64,
    kind: ScorerKind,
) -> Result<MetricsReport> {
    let (instances, report) =
        build_instances(&prep.ds, &prep.split, which, &prep.train_sessions, prep.granularity, model.variant.sessions);
    let seed = Seeds::from_root(root).eval;
    match kind {
        ScorerKind::Model => {
            let inputs = Inputs { sessions: &prep.train_sessions, social, epoch: None };
            let scorer = ModelScorer::new(model, &inputs, &instances)?;
            evaluate(&scorer, &prep.ds, &instances, report.skipped, eval, seed)
        }
        ScorerKind::Oracle => evaluate(&OracleScorer, &prep.ds, &instances, report.skipped, eval, seed),
        ScorerKind::Random => {
            let scorer = RandomScorer { seed: rng::derive(seed, &[rng::TAG_SHUFFLE]) };
            evaluate(&scorer, &prep.ds, &instances, report.skipped, eval, seed)
        }
    }
}

/// Every completed graph of every user's training sessions, as TSV.
pub fn write_completed_edges<W: Write>(out: W, prep: &Prepared, social: &Social) -> Result<()> {
    let graphs: Vec<_> = prep
        .train_sessions
        .iter()
        .flat_map(|seq| seq.sessions.iter().map(move |s| social.context.graph(seq.user, s, &prep.train_sessions, None)))
        .collect();
    let partition = social.glove.as_ref().map(pair_log_partition);
    write_edges_tsv(out, &prep.ds, &graphs, partition)
}

/// Result of a train-then-test run.
#[derive(Debug)]
pub struct Artifacts {
    pub run: TrainRun,
    pub checkpoint_json: String,
    pub metrics: MetricsReport,
}

/// Prepares data, trains, and evaluates on the test split.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Artifacts> {
    let prep = prepare(cfg)?;
    let run = train_run(&prep, cfg)?;
    let checkpoint_json = checkpoint(&run, cfg)?.to_json()?;
    let metrics = evaluate_model(&prep, &run.outcome.model, &run.social.context, Split::Test, &cfg.eval, cfg.seed)?;
    Ok(Artifacts { run, checkpoint_json, metrics })
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub metrics: MetricsReport,
    pub best_epoch: usize,
    pub access: AccessReport,
}

/// Trains and tests each variant with otherwise identical settings.
pub fn ablate(prep: &Prepared, cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.variant.name = v;
            let run = train_run(prep, &c)?;
            let metrics = evaluate_model(prep, &run.outcome.model, &run.social.context, Split::Test, &c.eval, c.seed)?;
            Ok(AblationRow { variant: v, metrics, best_epoch: run.outcome.best_epoch, access: run.social.access() })
        })
        .collect()
}

/// `variant  R@10  MRR` rows, in the order given.
pub fn write_ablation_tsv<W: Write>(mut out: W, rows: &[AblationRow]) -> std::io::Result<()> {
    let k = rows.first().map_or(10, |r| r.metrics.k);
    writeln!(out, "variant\tR@{k}\tMRR")?;
    for r in rows {
        writeln!(out, "{}\t{:.5}\t{:.5}", r.variant.label(), r.metrics.mean.recall, r.metrics.mean.mrr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticConfig;

    pub(crate) fn tiny() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 5;
        cfg.data.synthetic = SyntheticConfig { users: 12, items: 24, sessions_per_user: 4, ..SyntheticConfig::default() };
        cfg.model.dim = 4;
        cfg.glove.dim = 4;
        cfg.glove.epochs = 5;
        cfg.train.max_epochs = 2;
        cfg.train.learning_rate = 0.01;
        cfg.eval.repeats = 2;
        cfg
    }

    #[test]
    fn ablation_variants_touch_only_their_sources() {
        let cfg = tiny();
        let prep = prepare(&cfg).unwrap();
        let rows = ablate(&prep, &cfg, &[Variant::DreamR, Variant::DreamV, Variant::Dream]).unwrap();
        let r = &rows[0].access;
        assert!(r.edge_lists_built && r.real_reads > 0);
        assert!(!r.glove_trained);
        assert_eq!((r.virtual_reads, r.glove_reads), (0, 0));
        let v = &rows[1].access;
        assert!(!v.edge_lists_built);
        assert_eq!(v.real_reads, 0);
        assert!(v.glove_trained && v.virtual_reads > 0);
        let full = &rows[2].access;
        assert!(full.real_reads > 0 && full.virtual_reads > 0);
        let mut buf = Vec::new();
        write_ablation_tsv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("variant\tR@10\tMRR\nR\t"));
    }

    #[test]
    fn checkpoint_metadata_restores_the_evaluation() {
        let cfg = tiny();
        let prep = prepare(&cfg).unwrap();
        let run = train_run(&prep, &cfg).unwrap();
        let direct =
            evaluate_model(&prep, &run.outcome.model, &run.social.context, Split::Test, &cfg.eval, cfg.seed).unwrap();
        let ck = Checkpoint::from_json(&checkpoint(&run, &cfg).unwrap().to_json().unwrap()).unwrap();
        let (run_cfg, vf) = checkpoint_context(&ck).unwrap();
        assert_eq!(run_cfg, cfg);
        let social = social_from_parts(&prep, &ck.model.variant, &run_cfg, vf).unwrap();
        let restored = evaluate_model(&prep, &ck.model, &social.context, Split::Test, &cfg.eval, cfg.seed).unwrap();
        assert_eq!(direct, restored);
    }
}
