//! Social-graph completion: co-occurrence counts, GloVe user embeddings and
//! the virtual friends they select, compared with the planted clusters.
//!
//! `cargo run --release --example virtual_friends`

use dream::completion::{build_cooccurrence, train_glove, GloveConfig, SocialContext, VirtualFriends};
use dream::data::SplitAssignment;
use dream::synthetic::{planted, SyntheticConfig};

fn main() -> dream::Result<()> {
    let cfg = SyntheticConfig::default();
    let ds = planted(&cfg, 1)?;
    let split = SplitAssignment::random(ds.events().len(), Default::default(), 2)?;
    let x = build_cooccurrence(&ds, Some(&split));
    println!("{} users, {} nonzero co-occurrence entries", x.num_users(), x.nnz());

    let (model, report) = train_glove(&x, &GloveConfig { dim: 16, ..GloveConfig::default() }, 3)?;
    let losses = &report.epoch_losses;
    println!("glove loss {:.4} -> {:.4} over {} epochs", losses[0], losses[losses.len() - 1], losses.len());

    let g = model.embeddings();
    let real = SocialContext::real_lists(&ds);
    let vf = VirtualFriends::select_all(&g, 5, Some(&real));
    let (mut same, mut total) = (0, 0);
    for u in 0..ds.num_users() as u32 {
        for &(q, _) in vf.get(u) {
            total += 1;
            same += usize::from(cfg.user_cluster(u as usize) == cfg.user_cluster(q as usize));
        }
    }
    println!(
        "virtual friends sharing the user's planted cluster: {same}/{total} ({:.1}%, chance {:.1}%)",
        100.0 * same as f64 / total as f64,
        100.0 / cfg.clusters as f64
    );
    for u in 0..3u32 {
        let list: Vec<String> = vf.get(u).iter().map(|(q, s)| format!("{}:{s:.2}", ds.user_id(*q))).collect();
        println!("{} -> {}", ds.user_id(u), list.join(" "));
    }
    Ok(())
}
