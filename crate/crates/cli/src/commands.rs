use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rnnf_core::evalsearch::{
    final_eval, run_search, sample_trial, ModelConfig, SearchOptions, TrialResult, TrialStatus,
    TRANSIENT,
};
use rnnf_core::timeseries::SyntheticTask;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

/// Writes the series CSV plus a `<file>.meta.json` sidecar with the
/// generator arguments.
pub fn generate(task: SyntheticTask, n: usize, seed: u64, out: &Path) -> Result<()> {
    let series = task.generate(n, seed).map_err(config)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        out_dir(dir)?;
    }
    series.write_csv(out).map_err(runtime)?;
    let mut meta = out.as_os_str().to_owned();
    meta.push(".meta.json");
    write_json(
        &PathBuf::from(meta),
        &json!({ "task": task, "n": n, "seed": seed, "horizon": task.horizon() }),
    )?;
    log::info!("wrote {} samples to {}", n, out.display());
    Ok(())
}

/// Reads trials recorded by an interrupted run. A truncated final line is
/// dropped; any record that does not match what this configuration would
/// sample is a configuration error.
fn load_completed(path: &Path, cfg: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    let file = File::open(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(runtime)?;
    let mut done = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: TrialResult = match serde_json::from_str(line) {
            Ok(t) => t,
            Err(_) if i + 1 == lines.len() => {
                log::warn!("ignoring truncated last line of {}", path.display());
                break;
            }
            Err(e) => return Err(config(format!("{}:{}: {e}", path.display(), i + 1))),
        };
        if t.index >= cfg.budget {
            continue;
        }
        let (expect, seed) = sample_trial(cfg.space(), cfg.master_seed, t.index);
        if expect != t.config || seed != t.seed {
            return Err(config(format!(
                "trial {} in {} was produced by a different configuration or seed",
                t.index,
                path.display()
            )));
        }
        if !done.iter().any(|d: &TrialResult| d.index == t.index) {
            done.push(t);
        }
    }
    Ok(done)
}

/// Random search. Writes `trials.jsonl` as trials finish, then
/// `search_report.json` and `best_config.json`.
pub fn search(cfg: &ExperimentConfig, out: &Path, resume: bool) -> Result<()> {
    let dataset = cfg.dataset().map_err(config)?;
    out_dir(out)?;
    let trials_path = out.join("trials.jsonl");
    let completed = if resume && trials_path.exists() {
        load_completed(&trials_path, cfg)?
    } else {
        Vec::new()
    };
    if !completed.is_empty() {
        log::info!(
            "resuming with {} of {} trials done",
            completed.len(),
            cfg.budget
        );
    }
    let mut log_file = create(&trials_path)?;
    for t in &completed {
        writeln!(log_file, "{}", serde_json::to_string(t).map_err(runtime)?).map_err(runtime)?;
    }
    log_file.flush().map_err(runtime)?;
    let log_file = Mutex::new(log_file);
    let write_error = Mutex::new(None);
    let opts = SearchOptions {
        budget: cfg.budget,
        workers: cfg.workers,
        master_seed: cfg.master_seed,
    };
    let report = run_search(cfg.space(), &dataset, &opts, completed, |t| {
        log::info!(
            "trial {:>4}: {:?} valid NRMSE {:.5} ({:.1}s)",
            t.index,
            t.status,
            t.valid_nrmse,
            t.seconds
        );
        let mut f = log_file.lock().unwrap();
        let r = serde_json::to_string(t)
            .map_err(std::io::Error::other)
            .and_then(|s| writeln!(f, "{s}"))
            .and_then(|_| f.flush());
        if let Err(e) = r {
            write_error.lock().unwrap().get_or_insert(e);
        }
    })
    .map_err(runtime)?;
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(runtime(format!("{}: {e}", trials_path.display())));
    }
    write_json(
        &out.join("search_report.json"),
        &json!({ "experiment": cfg, "master_seed": cfg.master_seed, "report": report }),
    )?;
    let best = report
        .trials
        .first()
        .filter(|t| t.status == TrialStatus::Ok)
        .ok_or_else(|| runtime("no trial finished successfully"))?;
    write_json(
        &out.join("best_config.json"),
        &json!({
            "experiment": cfg,
            "master_seed": cfg.master_seed,
            "trial": best.index,
            "seed": best.seed,
            "valid_nrmse": best.valid_nrmse,
            "model": best.config,
        }),
    )?;
    log::info!(
        "best trial {} with validation NRMSE {:.5}",
        best.index,
        best.valid_nrmse
    );
    Ok(())
}

/// Accepts either a `best_config.json` written by `search` or a bare model
/// configuration.
fn load_model(path: &Path) -> Result<ModelConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let inner = value.get("model").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Final evaluation with restarts. Writes `metrics.json`, `model.json`,
/// and raw-scale `predictions.csv` / `residuals.csv` for the best restart.
pub fn eval(cfg: &ExperimentConfig, model_path: Option<&Path>, out: &Path) -> Result<()> {
    let model = match model_path {
        Some(p) => {
            let m = load_model(p)?;
            let m = match cfg.epochs {
                Some(e) => m.with_epochs(e),
                None => m,
            };
            if m.arch() != cfg.arch {
                return Err(config(format!(
                    "model is for {} but arch is {}",
                    m.arch(),
                    cfg.arch
                )));
            }
            m
        }
        None => cfg
            .model()
            .cloned()
            .ok_or_else(|| config("no model: pass --model or set \"model\" in the config"))?,
    };
    let dataset = cfg.dataset().map_err(config)?;
    out_dir(out)?;
    let (report, fitted) = final_eval(&model, &dataset, cfg.restarts, cfg.master_seed, cfg.workers)
        .map_err(runtime)?;
    log::info!(
        "best restart {} test NRMSE {:.5} (mean {:.5}, std {:.5})",
        report.best_restart,
        report.best_nrmse,
        report.mean_nrmse,
        report.std_nrmse
    );
    let test = dataset.split.test.clone();
    let (pred, truth) = fitted
        .predict_raw(&dataset, test.clone())
        .map_err(runtime)?;
    let best_seed = report.restarts[report.best_restart].seed;
    write_json(
        &out.join("metrics.json"),
        &json!({ "experiment": cfg, "master_seed": cfg.master_seed, "model": model, "report": report }),
    )?;
    write_json(
        &out.join("model.json"),
        &json!({ "experiment": cfg, "master_seed": cfg.master_seed, "seed": best_seed, "fitted": fitted }),
    )?;
    let mut p = create(&out.join("predictions.csv"))?;
    let mut r = create(&out.join("residuals.csv"))?;
    let io = |e: std::io::Error| runtime(e);
    writeln!(p, "index,timestamp,truth,prediction,scored").map_err(io)?;
    writeln!(r, "index,timestamp,residual").map_err(io)?;
    let skip = if pred.len() >= TRANSIENT + 2 {
        TRANSIENT
    } else {
        0
    };
    for (k, t) in test.enumerate() {
        let ts = dataset.label_timestamp(t).format("%Y-%m-%dT%H:%M:%S");
        writeln!(
            p,
            "{t},{ts},{},{},{}",
            truth[k],
            pred[k],
            u8::from(k >= skip)
        )
        .map_err(io)?;
        writeln!(r, "{t},{ts},{}", truth[k] - pred[k]).map_err(io)?;
    }
    p.flush().map_err(io)?;
    r.flush().map_err(io)?;
    Ok(())
}
