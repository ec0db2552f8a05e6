//! Trains every variant on the planted dataset and prints the ablation
//! table with the friend-source access counters of each run.
//!
//! `cargo run --release --example ablation -- [epochs] [dim]`

use dream::config::RunConfig;
use dream::model::Variant;
use dream::pipeline::{ablate, prepare, write_ablation_tsv};

fn main() -> dream::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let epochs = args.next().unwrap_or(30);
    let dim = args.next().unwrap_or(16);
    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    cfg.model.dim = dim;
    cfg.glove.dim = dim;
    cfg.train.learning_rate = 0.01;
    cfg.train.max_epochs = epochs;
    cfg.train.patience = 10;
    cfg.eval.repeats = 1;

    let prep = prepare(&cfg)?;
    let rows = ablate(&prep, &cfg, &Variant::ALL)?;
    write_ablation_tsv(std::io::stdout().lock(), &rows).expect("stdout");
    println!();
    println!("{:<6} {:>10} {:>12} {:>10} {:>6}", "", "real reads", "virtual reads", "glove", "best");
    for r in &rows {
        let a = &r.access;
        println!(
            "{:<6} {:>10} {:>12} {:>10} {:>6}",
            r.variant.label(),
            a.real_reads,
            a.virtual_reads,
            if a.glove_trained { "trained" } else { "-" },
            r.best_epoch
        );
    }
    Ok(())
}
