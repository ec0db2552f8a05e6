//! The 1000-negative ranking protocol on a large sparse catalog, scored by
//! the random and oracle reference scorers.
//!
//! `cargo run --release --example evaluate_protocol -- [users] [seed]`

use dream::completion::{CompletionConfig, SocialContext};
use dream::data::{Granularity, Split, SplitAssignment, SplitRatios};
use dream::evaluator::EvalConfig;
use dream::model::{DreamModel, ModelConfig, Variant};
use dream::pipeline::{evaluate_with, Prepared, ScorerKind};
use dream::synthetic::sparse_catalog;

fn main() -> dream::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let users = args.first().copied().unwrap_or(1000) as usize;
    let seed = args.get(1).copied().unwrap_or(7);

    let ds = sparse_catalog(users, 1100, 12, seed)?;
    let split = SplitAssignment::random(ds.events().len(), SplitRatios::default(), seed + 1)?;
    let prep = Prepared::new(ds, split, Granularity::Month);
    let model = DreamModel::new(
        prep.ds.num_users(),
        prep.ds.num_items(),
        ModelConfig { dim: 4, ..ModelConfig::default() },
        Variant::Dream.config(2),
        seed,
    )?;
    let social = SocialContext::new(None, None, CompletionConfig::default(), seed);
    let eval = EvalConfig::default();
    for kind in [ScorerKind::Random, ScorerKind::Oracle] {
        let report = evaluate_with(&prep, &model, &social, Split::Test, &eval, seed, kind)?;
        println!("{kind:?} scorer");
        print!("{}", report.table());
    }
    println!("analytic random Recall@10 = 10/1001 = {:.5}", 10.0 / 1001.0);
    Ok(())
}
