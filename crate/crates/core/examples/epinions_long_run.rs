//! Long run on a real Epinions-style dump, reporting metrics for comparison
//! with reference numbers. Nothing is asserted.
//!
//! `cargo run --release --example epinions_long_run -- events.tsv [social.tsv] [config.toml]`
//!
//! Events are `user<TAB>item<TAB>unix_seconds[<TAB>rating]`, social edges
//! `user<TAB>friend`.

use std::path::PathBuf;

use dream::config::RunConfig;
use dream::pipeline::run_pipeline;

fn main() -> dream::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(events) = args.first() else {
        eprintln!("usage: epinions_long_run events.tsv [social.tsv] [config.toml]");
        std::process::exit(2);
    };
    let mut cfg = match args.get(2) {
        Some(path) => RunConfig::load(&PathBuf::from(path))?,
        None => RunConfig::default(),
    };
    cfg.data.events = Some(events.into());
    cfg.data.social = args.get(1).map(PathBuf::from);
    cfg.validate()?;
    let art = run_pipeline(&cfg)?;
    println!("best epoch {}", art.run.outcome.best_epoch);
    print!("{}", art.metrics.table());
    Ok(())
}
