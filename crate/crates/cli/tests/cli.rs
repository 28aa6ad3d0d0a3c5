use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdae-ivs"))
}

fn smoke_text() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_dataset_file_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 1
[data.amat]
train = "nowhere/train.amat"
test = "nowhere/test.amat"
split = [10, 5]
[ivs]
threshold = 0.3
max_iterations = 2
learning_rate = 0.05
max_epochs = 2
patience = 1
[dae]
hidden_units = [4]
noise_sd = 0.2
learning_rate = 0.05
epochs = 1
[top]
learning_rate = 0.05
max_epochs = 2
patience = 1
[fine_tune]
learning_rate = 0.05
max_epochs = 2
patience = 1
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("nowhere/train.amat"), "{}", stderr(&o));
}

#[test]
fn missing_field_exits_with_config_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_text().replace("threshold = 0.3\n", ""));
    let o = run(&["ivs", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));
}

#[test]
fn paper_grid_rejects_off_grid_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_text());
    let o = run(&["ivs", "--paper-grid", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dae.epochs = 5"), "{}", stderr(&o));
}

#[test]
fn zero_threshold_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_text().replace("threshold = 0.3", "threshold = 0.0"));
    let out = dir.path().join("out");
    let o = run(&["ivs", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&out.join("ivs.json"));
    assert_eq!(s["history"].as_array().unwrap().len(), 2);
    assert_eq!(s["final_popcount"], 24);
    assert!(out.join("history.csv").exists());
    assert!(out.join("mask.json").exists());
}

#[test]
fn smoke_run_then_eval_reconstruct_and_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_text());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--config", cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("depth,sdae,sdae-ivs\n"));

    let report = json(&out.join("report.json"));
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 4);
    for p in ["sdae", "sdae-ivs"] {
        assert!(results.iter().any(|r| r["pipeline"] == p));
    }
    for rel in report["artifacts"].as_array().unwrap() {
        assert!(out.join(rel.as_str().unwrap()).exists(), "{rel}");
    }
    assert!(out.join("timing.json").exists());

    let row = results.iter().find(|r| r["pipeline"] == "sdae-ivs" && r["depth"] == 2).unwrap();
    let model = out.join(row["model"].as_str().unwrap());
    let model = model.to_str().unwrap();
    let eval_out = dir.path().join("eval");
    let o = run(&["eval", "--config", cfg, "--model", model, "--out", eval_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = json(&eval_out.join("eval.json"));
    assert_eq!(eval["test"], row["test"]);
    assert_eq!(eval["valid"], row["valid"]);

    let o = run(&["reconstruct", "--config", cfg, "--model", model, "--out", eval_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read(eval_out.join("reconstruction.pgm")).unwrap().starts_with(b"P5"));

    let o = run(&["export-patterns", "--config", cfg, "--model", model, "--out", eval_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ex = json(&eval_out.join("extractors.json"));
    let total = ex["relevant"].as_array().unwrap().len() + ex["irrelevant"].as_array().unwrap().len();
    assert_eq!(total, 12);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_text());
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["run", "--seed", "11", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(json(&dir.path().join("a/report.json"))["seed"], 11);
}

#[test]
fn model_width_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_text());
    let out = dir.path().join("out");
    assert!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let other = write_config(
        &fs::create_dir_all(dir.path().join("w")).map(|_| dir.path().join("w")).unwrap(),
        &smoke_text().replace("num_irrelevant = 18", "num_irrelevant = 14").replace("image_shape = [4, 6]", "image_shape = [4, 5]"),
    );
    let o = run(&[
        "eval",
        "--config",
        other.to_str().unwrap(),
        "--model",
        out.join("models/sdae-depth1.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
