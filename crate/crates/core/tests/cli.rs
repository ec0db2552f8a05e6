use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dream");

/// A small but complete run: 12 planted users, width 4, one epoch.
const TINY: &str = "seed = 5
[data.synthetic]
users = 12
items = 24
sessions_per_user = 4
[model]
dim = 4
[glove]
dim = 4
epochs = 5
[train]
max_epochs = 1
learning_rate = 0.01
[eval]
repeats = 2
";

fn dream(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dream(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn ingest_writes_stats_matching_a_hand_tally() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("e.tsv");
    let social = dir.path().join("s.tsv");
    // One duplicate event, one rating column, one duplicate edge, one self loop.
    let events_text = "u1\ti1\t100\nu1\ti2\t200\nu1\ti1\t100\nu2\ti2\t300\nu3\ti3\t400\t5\n";
    fs::write(&events, events_text).unwrap();
    fs::write(&social, "u1\tu2\nu1\tu2\nu2\tu2\nu2\tu3\n").unwrap();
    let out = dir.path().join("out");
    ok(&["ingest", "--events", s(&events), "--social", s(&social), "--granularity", "month", "--out", s(&out)]);
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["users"], 3);
    assert_eq!(stats["items"], 3);
    assert_eq!(stats["events"], 4);
    assert_eq!(stats["social_links"], 2);
    assert_eq!(stats["avg_sessions_per_user"], 1.0);
    assert_eq!(stats["avg_real_friends_per_user"].as_f64().unwrap(), 2.0 / 3.0);
    assert!(out.join("dataset.json").exists());
    assert_eq!(fs::read_to_string(&events).unwrap(), events_text, "input must not change");
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let out = dream(&["ingest", "--events", "/definitely/missing.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/missing.tsv"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    assert_eq!(dream(&["train", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(dream(&["train", "--sessions", "0", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(dream(&["train", "--variant", "dream-x"]).status.code(), Some(2));
}

#[test]
fn train_without_virtual_friends_never_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("r");
    let out = ok(&["-v", "train", "--config", s(&cfg), "--variant", "dream-r", "--out", s(&out_dir)]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("virtual reads 0, glove reads 0, glove trained false"), "{log}");
    for f in ["checkpoint.json", "history.csv", "run.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_recall10\n1,"));
}

#[test]
fn evaluate_reports_standard_flag_and_oracle_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--out", s(&run)]);
    let ck = run.join("checkpoint.json");

    let single = dir.path().join("single");
    let out = ok(&["evaluate", "--checkpoint", s(&ck), "--split", "test", "--repeats", "1", "--out", s(&single)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[non-standard protocol]"));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(single.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["standard"], false);
    assert_eq!(m["per_repeat"].as_array().unwrap().len(), 1);

    let oracle = dir.path().join("oracle");
    ok(&["evaluate", "--checkpoint", s(&ck), "--scorer", "oracle", "--out", s(&oracle)]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(oracle.join("metrics.json")).unwrap()).unwrap();
    for key in ["recall", "ndcg", "mrr", "ndcg_at_k"] {
        assert_eq!(m["mean"][key], 1.0, "{key}");
    }
}

#[test]
fn ablate_filters_rows_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["ablate", "--config", s(&cfg), "--only", "dream-r,dream", "--out", s(&a)]);
    ok(&["ablate", "--config", s(&cfg), "--only", "dream-r,dream", "--out", s(&b)]);
    let table = fs::read_to_string(a.join("ablation.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "variant\tR@10\tMRR");
    assert!(lines[1].starts_with("R\t") && lines[2].starts_with("full\t"));
    assert_eq!(table, fs::read_to_string(b.join("ablation.tsv")).unwrap());
}

#[test]
fn complete_exports_edges_with_both_relations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let edges = dir.path().join("edges.tsv");
    ok(&["complete", "--config", s(&cfg), "--edges", s(&edges)]);
    let text = fs::read_to_string(&edges).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("user\tfriend\trelation\tweight\tsession"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5 && r[0] != r[1]));
    assert!(rows.iter().any(|r| r[2] == "real"));
    assert!(rows.iter().any(|r| r[2] == "virtual"));
    let virtual_weights: Vec<f64> = rows.iter().filter(|r| r[2] == "virtual").map(|r| r[3].parse().unwrap()).collect();
    assert!(virtual_weights.iter().all(|w| *w > 0.0 && *w < 1.0));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("o");
    ok(&["--threads", "1", "train", "--config", s(&cfg), "--seed", "9", "--sessions", "3", "--out", s(&out)]);
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 9);
    assert_eq!(run["variant"]["sessions"], 3);
    assert_eq!(run["model"]["dim"], 4);
}
