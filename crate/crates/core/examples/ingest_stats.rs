//! Writes a planted dataset as tab-separated files, ingests it back and
//! prints the dataset statistics.
//!
//! `cargo run --release --example ingest_stats -- [dir]`

use std::fmt::Write as _;
use std::path::PathBuf;

use dream::data::{stats, Dataset, Granularity};
use dream::synthetic::{planted, SyntheticConfig};

fn main() -> dream::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    let ds = planted(&SyntheticConfig::default(), 1)?;
    let (mut events, mut social) = (String::new(), String::new());
    for e in ds.events() {
        let _ = writeln!(events, "{}\t{}\t{}", ds.user_id(e.user), ds.item_id(e.item), e.timestamp);
    }
    for &(u, v) in ds.social_edges() {
        let _ = writeln!(social, "{}\t{}", ds.user_id(u), ds.user_id(v));
    }
    let (ep, sp) = (dir.join("dream_events.tsv"), dir.join("dream_social.tsv"));
    std::fs::write(&ep, events).expect("write events");
    std::fs::write(&sp, social).expect("write social");

    let back = Dataset::ingest(&ep, Some(&sp))?;
    for g in [Granularity::Month, Granularity::Week] {
        println!("{g:?}: {}", serde_json::to_string(&stats(&back, g)).expect("json"));
    }
    println!("events in {}", ep.display());
    Ok(())
}
