//! Command-line front end: `ingest`, `complete`, `train`, `evaluate`, `ablate`.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dream::config::RunConfig;
use dream::data::{stats, Dataset, Granularity, Split};
use dream::error::{Error, Result};
use dream::model::{Checkpoint, Variant};
use dream::pipeline::{self, ScorerKind};
use dream::trainer::write_history_csv;

#[derive(Parser)]
#[command(name = "dream", version, about = "Social session-based recommendation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read events and social edges, write stats.json and dataset.json.
    Ingest {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long, default_value = "month")]
        granularity: Granularity,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Export the completed per-session ego graphs as a TSV of edges.
    Complete {
        #[command(flatten)]
        run: RunArgs,
        /// Output file (default: <out>/edges.tsv).
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Train one variant; writes checkpoint.json, history.csv and run.json.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a checkpoint; writes metrics.json and metrics.txt.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        /// `model`, or the `oracle` and `random` reference scorers.
        #[arg(long, default_value = "model")]
        scorer: ScorerKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test several variants; writes ablation.tsv.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated variants (default: all, in table order).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<Variant>>,
    },
}

/// A config file plus flags that override it.
#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run config (a previous run.json works).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    social: Option<PathBuf>,
    #[arg(long)]
    granularity: Option<Granularity>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.events {
            cfg.data.events = Some(v.clone());
        }
        if let Some(v) = &self.social {
            cfg.data.social = Some(v.clone());
        }
        if let Some(v) = self.granularity {
            cfg.data.granularity = v;
        }
        if let Some(v) = self.variant {
            cfg.variant.name = v;
        }
        if let Some(v) = self.sessions {
            cfg.variant.sessions = v;
        }
        if let Some(v) = self.dim {
            cfg.model.dim = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = Some(v.clone());
        }
        if cfg.output_dir.is_none() {
            cfg.output_dir = Some(PathBuf::from("."));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Ingest { events, social, granularity, out } => {
            let ds = Dataset::ingest(&events, social.as_deref())?;
            let s = stats(&ds, granularity);
            fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
            write(&out.join("stats.json"), &json(&s)?)?;
            write(&out.join("dataset.json"), &json(&ds)?)?;
            println!("{}", json(&s)?);
        }
        Command::Complete { run, edges } => {
            let cfg = run.resolve()?;
            let prep = pipeline::prepare(&cfg)?;
            let social = pipeline::build_social(&prep, &cfg.variant_config(), &cfg)?;
            let path = match edges {
                Some(p) => p,
                None => out_dir(&cfg)?.join("edges.tsv"),
            };
            pipeline::write_completed_edges(create(&path)?, &prep, &social)?;
            log::info!("wrote {}", path.display());
        }
        Command::Train { run } => {
            let cfg = run.resolve()?;
            let dir = out_dir(&cfg)?;
            write(&dir.join("run.json"), &cfg.to_json()?)?;
            let prep = pipeline::prepare(&cfg)?;
            let trained = pipeline::train_run(&prep, &cfg)?;
            pipeline::checkpoint(&trained, &cfg)?.save(&dir.join("checkpoint.json"))?;
            let path = dir.join("history.csv");
            write_history_csv(create(&path)?, &trained.outcome.history).map_err(|e| io_error(&path, e))?;
            println!(
                "best epoch {} validation R@10 {}",
                trained.outcome.best_epoch,
                trained.outcome.best_recall.map_or("-".into(), |r| format!("{r:.5}"))
            );
        }
        Command::Evaluate { checkpoint, split, repeats, negatives, scorer, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let (cfg, virtual_friends) = pipeline::checkpoint_context(&ck)?;
            let mut eval = cfg.eval.clone();
            if let Some(r) = repeats {
                eval.repeats = r;
            }
            if let Some(n) = negatives {
                eval.negatives = n;
            }
            eval.validate()?;
            let prep = pipeline::prepare(&cfg)?;
            let social = pipeline::social_from_parts(&prep, &ck.model.variant, &cfg, virtual_friends)?;
            let report =
                pipeline::evaluate_with(&prep, &ck.model, &social.context, split, &eval, cfg.seed, scorer)?;
            let dir = out.unwrap_or_else(|| checkpoint.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
            write(&dir.join("metrics.json"), &json(&report)?)?;
            write(&dir.join("metrics.txt"), &report.table())?;
            print!("{}", report.table());
        }
        Command::Ablate { run, only } => {
            let cfg = run.resolve()?;
            let dir = out_dir(&cfg)?;
            write(&dir.join("run.json"), &cfg.to_json()?)?;
            let variants = only.unwrap_or_else(|| Variant::ALL.to_vec());
            let prep = pipeline::prepare(&cfg)?;
            let rows = pipeline::ablate(&prep, &cfg, &variants)?;
            let path = dir.join("ablation.tsv");
            let mut buf = Vec::new();
            pipeline::write_ablation_tsv(&mut buf, &rows).map_err(|e| io_error(&path, e))?;
            let table = String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))?;
            write(&path, &table)?;
            write(&dir.join("ablation.json"), &json(&rows)?)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
