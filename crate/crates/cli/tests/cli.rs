use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_trixlab");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn trixlab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "train": {
            "method": "trix", "seed": 0, "epochs": 3, "tau": 2, "batch_size": 32, "hidden": [8],
            "attack": { "epsilon": "1/10", "num_steps": 3 },
            "eval_attack": { "epsilon": "1/10", "num_steps": 5, "random_start": true }
        },
        "data": { "kind": "synth", "num_classes": 4, "dim": 8, "samples_per_class": 20, "seed": 0 },
        "test": { "kind": "synth", "num_classes": 4, "dim": 8, "samples_per_class": 20, "seed": 1 }
    });
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = tiny_config(dir);
    let out = dir.join(name);
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(trixlab(&args));
    out
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn missing_config_exits_two() {
    let out = trixlab(&["train", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_field_exits_two_and_names_it() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path());
    let out = trixlab(&["train", "--config", cfg.to_str().unwrap(), "--train.tau", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
    let out = trixlab(&["train", "--config", cfg.to_str().unwrap(), "--method", "madry"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    let out = trixlab(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap(), "--train.lr.initial", "1e200"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn same_seed_gives_identical_run_files() {
    let dir = TempDir::new().unwrap();
    let a = train(dir.path(), "a", &["--seed", "7"]);
    let b = train(dir.path(), "b", &["--seed", "7"]);
    for file in ["report.csv", "metrics.jsonl", "model.json", "config.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let jsonl = std::fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
    for line in jsonl.lines() {
        assert!(serde_json::from_str::<Value>(line).unwrap().is_object());
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["run_id"].as_str().unwrap().ends_with("seed7"));
}

#[test]
fn attack_never_raises_accuracy() {
    let dir = TempDir::new().unwrap();
    let run = train(dir.path(), "run", &["--method", "trades", "--beta", "0"]);
    let report = std::fs::read_to_string(run.join("report.csv")).unwrap();
    assert!(report.starts_with("class,clean_acc,robust_acc\n"));
    for row in csv_rows(&report) {
        let (clean, robust): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(robust <= clean, "{row:?}");
    }
}

#[test]
fn eval_sweeps_and_zero_radius() {
    let dir = TempDir::new().unwrap();
    let run = train(dir.path(), "run", &[]);
    let run = run.to_str().unwrap();

    for row in csv_rows(&ok(trixlab(&["eval", "--run", run, "--eps", "0"]))) {
        assert_eq!(row[2], row[3], "{row:?}");
    }

    let text = ok(trixlab(&["eval", "--run", run, "--eps-sweep", "0:16:4", "--steps", "20"]));
    assert_eq!(text, std::fs::read_to_string(fixture("smoke_eps_sweep.csv")).unwrap());
    let sweep = csv_rows(&text);
    assert_eq!(sweep.len(), 4 * 5);
    // Regression check on this model, not a general property of PGD.
    for c in 0..4 {
        let robust: Vec<f64> = sweep.iter().filter(|r| r[0] == c.to_string()).map(|r| r[3].parse().unwrap()).collect();
        assert!(robust.windows(2).all(|w| w[1] <= w[0]), "class {c}: {robust:?}");
    }
}

#[test]
fn eval_rejects_mismatched_data() {
    let dir = TempDir::new().unwrap();
    let run = train(dir.path(), "run", &[]);
    let other = dir.path().join("wide.json");
    let cfg = serde_json::json!({
        "train": { "method": "trades" },
        "data": { "kind": "synth", "num_classes": 4, "dim": 5, "samples_per_class": 3 }
    });
    std::fs::write(&other, cfg.to_string()).unwrap();
    let out = trixlab(&[
        "eval",
        "--model",
        run.join("model.json").to_str().unwrap(),
        "--config",
        other.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_against_itself_has_zero_rho() {
    let dir = TempDir::new().unwrap();
    let table = fixture("cifar10_trades_classwise.csv");
    let out = dir.path().join("m.json");
    ok(trixlab(&["report", table.to_str().unwrap(), "--baseline", table.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(m["rho"]["clean"]["rho"], 0.0);
    assert_eq!(m["rho"]["robust"]["rho"], 0.0);
    let std = m["clean"]["disparity"]["std_dev"].as_f64().unwrap();
    assert!((std - 0.0934).abs() <= 0.0005, "{std}");
}

#[test]
fn report_on_a_run_directory_writes_metrics_json() {
    let dir = TempDir::new().unwrap();
    let run = train(dir.path(), "run", &[]);
    ok(trixlab(&["report", run.to_str().unwrap()]));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["attack_success_rate"].as_array().unwrap().len(), 4);
}

#[test]
fn summary_report_reproduces_rho_clean() {
    let table = fixture("cifar10_method_summary.csv");
    let m: Value = serde_json::from_str(&ok(trixlab(&["report", table.to_str().unwrap(), "--baseline", "trades"]))).unwrap();
    let bat = m["rows"].as_array().unwrap().iter().find(|r| r["name"] == "bat").unwrap();
    let rho = bat["rho_clean"]["rho"].as_f64().unwrap();
    assert!((rho - 0.05).abs() <= 0.015, "{rho}");

    let out = trixlab(&["report", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_baseline_leaves_rho_undefined() {
    let dir = TempDir::new().unwrap();
    let (base, variant) = (dir.path().join("base.csv"), dir.path().join("variant.csv"));
    std::fs::write(&base, "class,clean_acc,robust_acc\n0,0.9,0.0\n1,0.8,0.4\n").unwrap();
    std::fs::write(&variant, "class,clean_acc,robust_acc\n0,0.85,0.1\n1,0.8,0.3\n").unwrap();
    let m: Value =
        serde_json::from_str(&ok(trixlab(&["report", variant.to_str().unwrap(), "--baseline", base.to_str().unwrap()])))
            .unwrap();
    assert!(m["rho"]["robust"].is_null());
    assert!(m["rho"]["clean"]["rho"].is_f64());
}

#[test]
fn report_rejects_mismatched_class_counts() {
    let dir = TempDir::new().unwrap();
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "class,clean_acc,robust_acc\n0,0.9,0.5\n1,0.8,0.4\n").unwrap();
    let table = fixture("cifar10_trades_classwise.csv");
    let out = trixlab(&["report", table.to_str().unwrap(), "--baseline", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_ovo_ova_two_classes() {
    let a: Value = serde_json::from_str(&ok(trixlab(&["analyze", "ovo-ova", "--k", "2", "--r", "1"]))).unwrap();
    assert_eq!(a["ovo"][0][1], 2.0);
    assert_eq!(trixlab(&["analyze", "svd"]).status.code(), Some(2));
}

#[test]
fn analyze_pca_and_coverage_on_a_run() {
    let dir = TempDir::new().unwrap();
    let run = train(dir.path(), "run", &[]);
    let r = run.to_str().unwrap();

    let pca: Value = serde_json::from_str(&ok(trixlab(&["analyze", "pca", "--run", r, "--attack"]))).unwrap();
    assert!(pca["warning"].is_null());
    let csv = std::fs::read_to_string(run.join("pca.csv")).unwrap();
    assert!(csv.starts_with("class,pc1,pc2,pc3\n"));
    assert_eq!(csv.lines().count(), 81);

    let pca2 = dir.path().join("two.csv");
    let warned: Value = serde_json::from_str(&ok(trixlab(&[
        "analyze", "pca", "--run", r, "--limit", "2", "--out", pca2.to_str().unwrap(),
    ])))
    .unwrap();
    assert!(warned["warning"].is_string());

    let cov: Value =
        serde_json::from_str(&ok(trixlab(&["analyze", "coverage", "--run", r, "--limit", "1", "--bins", "100"]))).unwrap();
    assert_eq!(cov["coverage"]["fraction"], 0.01);
    let csv = std::fs::read_to_string(run.join("coverage.csv")).unwrap();
    assert!(csv.starts_with("class,coverage,occupied,bins,samples\nall,"));
}
