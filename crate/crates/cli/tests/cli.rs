mod common;

use std::fs;

use common::{code, moral, sha256, stdout, tree_digest, Workspace};
use moral_core::evaluation::EvalReport;
use moral_core::model::{build_frozen_model, encode_base_weights, load_checkpoint, ToyModelConfig, TrainConfig};

fn report(ws: &Workspace, mode: &str) -> EvalReport {
    let text = fs::read_to_string(ws.out().join("reports").join(format!("eval_{mode}.json"))).unwrap();
    EvalReport::from_json(&text).unwrap()
}

#[test]
fn curate_is_reproducible_and_summary_matches_files() {
    let ws = Workspace::new();
    let first = ws.run(&["curate"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let data = ws.out().join("data");
    let digest = tree_digest(&data);
    let again = ws.run(&["curate"]);
    assert_eq!(code(&again), 0);
    assert_eq!(tree_digest(&data), digest);
    assert_eq!(stdout(&first), stdout(&again));

    let summary: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    let lines = |f: &str| fs::read_to_string(data.join(f)).unwrap().lines().count() as u64;
    assert_eq!(summary["train"].as_u64().unwrap(), lines("train.jsonl"));
    assert_eq!(summary["test"].as_u64().unwrap(), lines("test.jsonl"));
    assert_eq!(
        summary["records"].as_u64().unwrap(),
        summary["chunks"].as_u64().unwrap()
    );
    assert_eq!(lines("index.jsonl"), summary["chunks"].as_u64().unwrap());
}

#[test]
fn other_seed_changes_the_split() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["curate"])), 0);
    let a = sha256(&ws.out().join("data/train.jsonl"));
    let b_out = ws.path().join("other");
    assert_eq!(
        code(&ws.run(&["--seed", "99", "--out-dir", b_out.to_str().unwrap(), "curate"])),
        0
    );
    assert_eq!(
        sha256(&ws.out().join("data/index.jsonl")),
        sha256(&b_out.join("data/index.jsonl"))
    );
    assert_ne!(a, sha256(&b_out.join("data/train.jsonl")));
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let ws = Workspace::new();
    let out = ws.run(&["curate", "--corpus", "/definitely/not/here"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn broken_config_is_a_usage_error() {
    let ws = Workspace::new();
    let bad = ws.path().join("bad.json");
    fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(code(&moral(&["--config", bad.to_str().unwrap(), "curate"])), 2);
    assert_eq!(
        code(&moral(&[
            "--config",
            ws.path().join("absent.json").to_str().unwrap(),
            "curate"
        ])),
        2
    );
}

#[test]
fn train_zero_epochs_saves_the_initial_model() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["curate"])), 0);
    let out = ws.run(&["train", "--epochs", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let saved = load_checkpoint(&ws.out().join("model")).unwrap();

    let model_cfg = ToyModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 32,
        max_seq_len: 220,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        n_experts: 4,
        top_k: 2,
        rank: 2,
        alpha: 4.0,
        ..Default::default()
    };
    let fresh = build_frozen_model(model_cfg, &train_cfg.adapter()).unwrap();
    assert_eq!(saved, fresh);
    assert_eq!(encode_base_weights(&saved), encode_base_weights(&fresh));
}

#[test]
fn train_twice_gives_identical_checkpoints() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["curate"])), 0);
    assert_eq!(code(&ws.run(&["train"])), 0);
    let model = ws.out().join("model");
    let first = tree_digest(&model);
    assert_eq!(code(&ws.run(&["train"])), 0);
    assert_eq!(tree_digest(&model), first);
    let csv = fs::read_to_string(model.join("loss.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("loss"));
}

#[test]
fn train_before_curate_fails_cleanly() {
    let ws = Workspace::new();
    let out = ws.run(&["train"]);
    assert_ne!(code(&out), 0);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn closed_eval_reports_no_context_metrics() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["curate"])), 0);
    assert_eq!(code(&ws.run(&["train", "--epochs", "1"])), 0);
    let out = ws.run(&["eval", "--mode", "closed"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&ws, "closed");
    assert!(r.faith.is_none() && r.filter.is_none() && r.rr.is_none());
    assert!(r.ra_closed.is_some() && r.ra_open.is_none());
    assert!(stdout(&out).contains("RA-closed"));
}

#[test]
fn open_eval_without_any_retrieval_is_ra_only() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["curate"])), 0);
    assert_eq!(code(&ws.run(&["train", "--epochs", "0"])), 0);
    let cfg_path = ws.path().join("config.json");
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["retrieval"]["theta"] = serde_json::json!(0.999);
    fs::write(&cfg_path, cfg.to_string()).unwrap();

    assert_eq!(code(&ws.run(&["eval", "--mode", "open"])), 0);
    let r = report(&ws, "open");
    assert!(r.ra_open.is_some());
    assert!(r.faith.is_none() && r.filter.is_none() && r.rr.is_none());
    let empty = r
        .scenario_counts
        .iter()
        .find(|(s, _)| format!("{s:?}") == "EmptyContext")
        .map(|(_, n)| *n);
    assert_eq!(empty, Some(r.record_count));
}

#[test]
fn report_merges_modes() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["curate"])), 0);
    assert_eq!(code(&ws.run(&["train", "--epochs", "0"])), 0);
    assert_eq!(code(&ws.run(&["report"])), 2);
    for mode in ["open", "closed", "cross"] {
        assert_eq!(code(&ws.run(&["eval", "--mode", mode])), 0);
    }
    assert_eq!(code(&ws.run(&["report"])), 0);
    let merged = EvalReport::from_json(&fs::read_to_string(ws.out().join("reports/report.json")).unwrap()).unwrap();
    assert_eq!(merged.modes.len(), 3);
    assert!(merged.ra_open.is_some() && merged.ra_closed.is_some() && merged.qr.is_some() && merged.fl.is_some());
}

#[test]
fn unknown_eval_mode_is_a_usage_error() {
    assert_eq!(code(&moral(&["eval", "--mode", "sideways"])), 2);
    assert_eq!(code(&moral(&["frobnicate"])), 2);
}

#[test]
fn gradcheck_defaults_pass() {
    let out = moral(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["max_relative_error"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn gradcheck_rejects_bad_arguments() {
    assert_eq!(code(&moral(&["gradcheck", "--d-model", "64"])), 2);
    assert_eq!(code(&moral(&["gradcheck", "--epsilon", "0"])), 2);
    assert_eq!(code(&moral(&["gradcheck", "--rank", "0"])), 2);
}
