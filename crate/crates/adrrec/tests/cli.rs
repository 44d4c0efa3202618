use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn adrrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adrrec")).args(args).env("ADRREC_THREADS", "1").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ratings(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("ratings.dat");
    let mut body = String::new();
    for u in 1..=6 {
        for k in 0..6 {
            body.push_str(&format!("{u}::{}::4::{}\n", (u + k) % 6 + 1, 978_300_000 + k * 60));
        }
    }
    body.push_str("not a record\n");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn prepare_writes_stats_and_counts_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let raw = ratings(dir.path());
    let out = dir.path().join("prep");
    let o = adrrec(&["prepare", "--dataset", s(&raw), "--format", "movielens-dat", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["n_users"], 6);
    assert_eq!(stats["n_items"], 6);
    assert_eq!(stats["n_actions"], 36);
    assert!(String::from_utf8_lossy(&o.stderr).contains("malformed records: 1"));
    assert!(out.join("corpus.bin").exists() && out.join("config.json").exists());
}

#[test]
fn prepared_cache_feeds_training() {
    let dir = tempfile::tempdir().unwrap();
    let raw = ratings(dir.path());
    let prep = dir.path().join("prep");
    assert!(adrrec(&["prepare", "--dataset", s(&raw), "--format", "movielens-dat", "--out", s(&prep)]).status.success());
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"mode":"p-s-o","d_model":8,"head_dim":4,"d_ff":8,"max_len":6,"epochs":1,"eval":{"negatives":3,"exclude_history":false}}"#).unwrap();
    let train = dir.path().join("train");
    let o = adrrec(&["train", "--config", s(&cfg), "--dataset", s(&prep.join("corpus.bin")), "--out", s(&train)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.bin", "config.json", "train_report.jsonl", "train_summary.json"] {
        assert!(train.join(f).exists(), "{f}");
    }
    let eval = dir.path().join("eval");
    let o = adrrec(&["eval", "--checkpoint", s(&train.join("checkpoint.bin")), "--out", s(&eval)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(eval.join("metrics_standard_seed1.json")).unwrap()).unwrap();
    assert!(report["ndcg"]["10"].is_f64());
}

#[test]
fn invalid_mode_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let raw = ratings(dir.path());
    let o = adrrec(&["train", "--dataset", s(&raw), "--format", "movielens-dat", "--mode", "p-x", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"lnsr":{"lambda":"high"}}"#).unwrap();
    let o = adrrec(&["prepare", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lnsr.lambda"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_dataset_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = adrrec(&["prepare", "--dataset", s(&dir.path().join("absent.dat")), "--format", "movielens-dat", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_format_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let raw = ratings(dir.path());
    let o = adrrec(&["prepare", "--dataset", s(&raw), "--format", "parquet", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_command_passes() {
    let o = adrrec(&["gradcheck"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("gradcheck PASS"));
}
