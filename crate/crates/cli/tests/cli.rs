use std::fs;
use std::process::Command;

fn morphcl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_morphcl"));
    c.env("RUST_LOG", "warn");
    c
}

const TINY: &str = r#"{
  "experiment": "sine2",
  "conditions": ["C1", "C4"],
  "seeds": [0],
  "hidden": [8, 8],
  "engine": {
    "epochs_per_task": 4, "batch_size": 32, "warmup_epochs": 2, "j_window": 2,
    "search": {"eval_epochs": 2, "eval_subset_size": 32, "step_size": 4, "max_rounds": 1},
    "ab": {"epochs": 2}
  },
  "sine": {"samples_per_task": 60}
}"#;

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let st = morphcl()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--conditions", "C1,C4", "--seeds", "3", "--ab-epochs", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.contains("C4,3,"));
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["engine"]["ab"]["epochs"], 1);
    fs::remove_file(out.join("summary.csv")).unwrap();
    let st = morphcl().args(["report", "--in"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train_frac": 1.5}"#).unwrap();
    assert_eq!(morphcl().args(["run", "--config"]).arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(morphcl().args(["run", "--config"]).arg(dir.path().join("missing.json")).status().unwrap().code(), Some(1));
    assert_eq!(morphcl().args(["report", "--in"]).arg(dir.path()).status().unwrap().code(), Some(1));
    assert_eq!(morphcl().args(["verify", "--suite", "nope"]).status().unwrap().code(), Some(1));
}

#[test]
fn verify_runs_selected_criteria() {
    let out = morphcl().args(["verify", "--suite", "acceptance", "--only", "2,7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
}
