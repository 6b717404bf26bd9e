use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn rnnf(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rnnf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let o = rnnf(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn small_esn_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("experiment.json");
    let mut space =
        serde_json::to_value(rnnf_core::evalsearch::HyperSpace::preset("esn").unwrap()).unwrap();
    space["n_hidden"] = json!({"dist": "choice", "values": [20.0, 30.0]});
    let cfg = json!({
        "data": {"source": "synthetic", "task": "mso", "n": 1000},
        "arch": "esn",
        "space": space,
        "model": {"arch": "esn", "n_hidden": 30, "rho": 0.9, "connectivity": 0.3, "noise": 0.0,
                  "omega_in": 0.5, "omega_out": 0.5, "omega_fb": 0.1, "l2": 0.01},
        "budget": 4,
        "restarts": 3,
        "master_seed": 11
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn generate_writes_requested_series() {
    let dir = tempfile::tempdir().unwrap();
    let mg = dir.path().join("mg.csv");
    ok(&["generate", "--task", "mg", "--n", "15000", "--out", s(&mg)]);
    let text = std::fs::read_to_string(&mg).unwrap();
    assert_eq!(text.lines().count(), 15001);
    assert!(text.starts_with("timestamp,mg\n"));
    let meta = read_json(&dir.path().join("mg.csv.meta.json"));
    assert_eq!(meta["n"], 15000);

    let mso = dir.path().join("mso.csv");
    ok(&["generate", "--task", "mso", "--n", "10", "--out", s(&mso)]);
    let first = std::fs::read_to_string(&mso)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    assert_eq!(
        first.split(',').nth(1).unwrap().parse::<f64>().unwrap(),
        0.0
    );

    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&[
        "generate",
        "--task",
        "narma",
        "--n",
        "500",
        "--seed",
        "3",
        "--out",
        s(&a),
    ]);
    ok(&[
        "generate",
        "--task",
        "narma",
        "--n",
        "500",
        "--seed",
        "3",
        "--out",
        s(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        rnnf(&["generate", "--task", "lorenz", "--out", s(&a)])
            .status
            .code(),
        Some(2)
    );
}

/// Report with the wall-clock fields removed.
fn outcome(report: &Value) -> Value {
    let mut r = report.clone();
    for t in r["report"]["trials"].as_array_mut().unwrap() {
        t.as_object_mut().unwrap().remove("seconds");
    }
    r
}

#[test]
fn search_smoke_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_esn_config(dir.path());
    let full = dir.path().join("full");
    ok(&[
        "search",
        "--config",
        s(&cfg),
        "--out",
        s(&full),
        "--budget",
        "2",
    ]);
    let report = read_json(&full.join("search_report.json"));
    assert_eq!(report["report"]["trials"].as_array().unwrap().len(), 2);
    assert_eq!(report["master_seed"], 11);
    assert_eq!(report["experiment"]["arch"], "esn");
    let best = read_json(&full.join("best_config.json"));
    assert_eq!(best["model"], report["report"]["trials"][0]["config"]);

    ok(&["search", "--config", s(&cfg), "--out", s(&full)]);
    let uninterrupted = read_json(&full.join("search_report.json"));
    assert_eq!(
        uninterrupted["report"]["trials"].as_array().unwrap().len(),
        4
    );

    // keep the first two records and a torn third line, then resume
    let part = dir.path().join("part");
    std::fs::create_dir_all(&part).unwrap();
    let lines: Vec<String> = std::fs::read_to_string(full.join("trials.jsonl"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let mut kept: Vec<&String> = lines
        .iter()
        .filter(|l| !l.contains("\"index\":3"))
        .collect();
    kept.truncate(2);
    let partial = format!("{}\n{}\n{}", kept[0], kept[1], &lines[0][..20]);
    std::fs::write(part.join("trials.jsonl"), partial).unwrap();
    ok(&["search", "--config", s(&cfg), "--out", s(&part), "--resume"]);
    assert_eq!(
        outcome(&read_json(&part.join("search_report.json"))),
        outcome(&uninterrupted)
    );
    assert_eq!(
        std::fs::read_to_string(part.join("trials.jsonl"))
            .unwrap()
            .lines()
            .count(),
        4
    );

    // records from another seed are rejected
    let o = rnnf(&[
        "search",
        "--config",
        s(&cfg),
        "--out",
        s(&part),
        "--resume",
        "--seed",
        "12",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_arch = dir.path().join("bad.json");
    std::fs::write(
        &bad_arch,
        r#"{"data": {"source": "synthetic", "task": "mso", "n": 500}, "arch": "transformer"}"#,
    )
    .unwrap();
    assert_eq!(
        rnnf(&["search", "--config", s(&bad_arch), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );

    let mismatch = dir.path().join("mismatch.json");
    std::fs::write(&mismatch, r#"{"data": {"source": "synthetic", "task": "mso", "n": 500}, "arch": "gru", "space": "lstm"}"#).unwrap();
    assert_eq!(
        rnnf(&["search", "--config", s(&mismatch), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );

    let missing = dir.path().join("missing.json");
    assert_eq!(
        rnnf(&["search", "--config", s(&missing), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );

    let no_model = dir.path().join("nomodel.json");
    std::fs::write(
        &no_model,
        r#"{"data": {"source": "synthetic", "task": "mso", "n": 500}, "arch": "esn"}"#,
    )
    .unwrap();
    assert_eq!(
        rnnf(&["eval", "--config", s(&no_model), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );

    assert_eq!(rnnf(&["search", "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn diverging_search_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sgd.json");
    let mut space =
        serde_json::to_value(rnnf_core::evalsearch::HyperSpace::preset("ernn").unwrap()).unwrap();
    space["n_hidden"] = json!({"dist": "choice", "values": [4.0]});
    space["optimizers"] = json!([{"kind": "sgd", "eta": {"dist": "fixed", "value": 1e6}}]);
    let cfg = json!({"data": {"source": "synthetic", "task": "mso", "n": 600}, "arch": "ernn", "space": space, "epochs": 2});
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = rnnf(&[
        "search",
        "--config",
        s(&path),
        "--out",
        s(&out),
        "--budget",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let report = read_json(&out.join("search_report.json"));
    assert_eq!(report["report"]["trials"][0]["status"], "diverged");
}

fn csv_column(p: &Path, col: usize) -> Vec<f64> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn eval_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_esn_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let w = dir.path().join("w");
    ok(&["eval", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["eval", "--config", s(&cfg), "--out", s(&b)]);
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--out",
        s(&w),
        "--workers",
        "2",
    ]);
    let text = |d: &Path, f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    for f in [
        "metrics.json",
        "model.json",
        "predictions.csv",
        "residuals.csv",
    ] {
        assert!(
            text(&a, f) == text(&b, f),
            "{f} differs between identical runs"
        );
    }
    for f in ["predictions.csv", "residuals.csv"] {
        assert!(
            text(&a, f) == text(&w, f),
            "{f} depends on the worker count"
        );
    }
    assert_eq!(
        read_json(&a.join("metrics.json"))["report"],
        read_json(&w.join("metrics.json"))["report"]
    );
    let metrics = read_json(&a.join("metrics.json"));
    assert_eq!(metrics["master_seed"], 11);
    assert_eq!(metrics["report"]["restarts"].as_array().unwrap().len(), 3);
    assert_eq!(metrics["model"]["n_hidden"], 30);

    let truth = csv_column(&a.join("predictions.csv"), 2);
    let pred = csv_column(&a.join("predictions.csv"), 3);
    let scored = csv_column(&a.join("predictions.csv"), 4);
    let resid = csv_column(&a.join("residuals.csv"), 2);
    assert_eq!(truth.len(), 198);
    for k in 0..truth.len() {
        assert_eq!(resid[k], truth[k] - pred[k]);
    }
    let idx: Vec<usize> = (0..truth.len()).filter(|&k| scored[k] == 1.0).collect();
    let y: Vec<f64> = idx.iter().map(|&k| pred[k]).collect();
    let t: Vec<f64> = idx.iter().map(|&k| truth[k]).collect();
    let best = metrics["report"]["best_nrmse"].as_f64().unwrap();
    assert_eq!(rnnf_core::evalsearch::nrmse(&y, &t).unwrap(), best);

    // a search's best_config.json is accepted as the model
    let search_out = dir.path().join("search");
    ok(&[
        "search",
        "--config",
        s(&cfg),
        "--out",
        s(&search_out),
        "--budget",
        "1",
    ]);
    let c = dir.path().join("c");
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--out",
        s(&c),
        "--model",
        s(&search_out.join("best_config.json")),
    ]);
    let best_cfg = read_json(&search_out.join("best_config.json"));
    assert_eq!(
        read_json(&c.join("metrics.json"))["model"],
        best_cfg["model"]
    );
}

#[test]
fn tuned_model_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tuned.json");
    let cfg = json!({"data": {"source": "synthetic", "task": "mg", "n": 2000}, "arch": "esn",
                     "model": "mg-esn", "restarts": 1});
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    ok(&["eval", "--config", s(&path), "--out", s(&out)]);
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["model"]["n_hidden"], 800);
    assert!(metrics["report"]["best_nrmse"].as_f64().unwrap() < 0.5);
}
