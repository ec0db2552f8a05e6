//! Trains the full model on the planted synthetic dataset and reports test
//! metrics under the sampled-negative protocol.
//!
//! cargo run --release --example train_synthetic -- [epochs] [learning_rate] [dim]

use dream::config::RunConfig;
use dream::pipeline::run_pipeline;

fn main() -> dream::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_owned());

    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    cfg.train.max_epochs = arg(0, "60").parse().expect("epochs");
    cfg.train.learning_rate = arg(1, "0.01").parse().expect("learning rate");
    cfg.model.dim = arg(2, "32").parse().expect("dim");
    cfg.glove.dim = cfg.model.dim;
    cfg.train.patience = 20;

    let started = std::time::Instant::now();
    let out = run_pipeline(&cfg)?;
    let o = &out.run.outcome;
    println!("best epoch {} of {}, validation R@10 {:?}", o.best_epoch, o.history.len(), o.best_recall);
    print!("{}", out.metrics.table());
    println!("{:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
