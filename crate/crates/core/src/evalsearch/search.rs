use std::sync::Mutex;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FittedModel, ModelConfig};
use super::space::HyperSpace;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::timeseries::TaskDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Diverged,
}

/// Non-finite scores are written as `null` and read back as infinity.
mod score {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub config: ModelConfig,
    pub seed: u64,
    /// Infinite when the trial diverged.
    #[serde(with = "score")]
    pub valid_nrmse: f64,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub seconds: f64,
}

impl TrialResult {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, o: &TrialResult) -> bool {
        self.index == o.index
            && self.config == o.config
            && self.seed == o.seed
            && self.valid_nrmse.to_bits() == o.valid_nrmse.to_bits()
            && self.status == o.status
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub budget: usize,
    pub workers: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub master_seed: u64,
    pub budget: usize,
    pub space: HyperSpace,
    /// Sorted by validation NRMSE, ties broken by trial index.
    pub trials: Vec<TrialResult>,
}

impl SearchReport {
    pub fn best(&self) -> Option<&TrialResult> {
        self.trials.first().filter(|t| t.status == TrialStatus::Ok)
    }

    pub fn n_ok(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Ok)
            .count()
    }
}

/// Configuration and training seed of trial `index`; depends only on the
/// space, the master seed and the index.
pub fn sample_trial(space: &HyperSpace, master_seed: u64, index: usize) -> (ModelConfig, u64) {
    let mut rng = RngStream::new(master_seed, 0).derive(index as u64 + 1);
    let config = space.sample(&mut rng);
    (config, rng.next_u64())
}

/// Trains trial `index` on the training split and scores it on the
/// validation split. Failures are recorded, never propagated.
pub fn run_trial(
    space: &HyperSpace,
    dataset: &TaskDataset,
    master_seed: u64,
    index: usize,
) -> TrialResult {
    let (config, seed) = sample_trial(space, master_seed, index);
    let t0 = Instant::now();
    let outcome = config
        .fit(dataset, seed, false)
        .and_then(|m| m.score(dataset, dataset.split.valid.clone()));
    let (valid_nrmse, status, message) = match outcome {
        Ok(v) if v.is_finite() => (v, TrialStatus::Ok, None),
        Ok(v) => (
            f64::INFINITY,
            TrialStatus::Diverged,
            Some(format!("score {v}")),
        ),
        Err(e) => (f64::INFINITY, TrialStatus::Diverged, Some(e.to_string())),
    };
    log::debug!(
        "trial {index} ({}): validation NRMSE {valid_nrmse:.5}",
        config.arch()
    );
    TrialResult {
        index,
        config,
        seed,
        valid_nrmse,
        status,
        message,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

pub fn rank(trials: &mut [TrialResult]) {
    trials.sort_by(|a, b| {
        a.valid_nrmse
            .total_cmp(&b.valid_nrmse)
            .then(a.index.cmp(&b.index))
    });
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))
}

/// Random search: evaluates trials `0..budget`, skipping those already in
/// `completed` (a resumed run), and returns them all ranked. `on_trial` is
/// called once per newly finished trial, from worker threads.
pub fn run_search(
    space: &HyperSpace,
    dataset: &TaskDataset,
    opts: &SearchOptions,
    completed: Vec<TrialResult>,
    on_trial: impl Fn(&TrialResult) + Sync,
) -> Result<SearchReport> {
    if opts.budget == 0 {
        return Err(Error::invalid("search budget must be at least 1"));
    }
    space.validate()?;
    let mut done = vec![false; opts.budget];
    let mut trials = Vec::with_capacity(opts.budget);
    for t in completed {
        if t.index < opts.budget && !done[t.index] {
            done[t.index] = true;
            trials.push(t);
        }
    }
    let todo: Vec<usize> = (0..opts.budget).filter(|&i| !done[i]).collect();
    let sink = Mutex::new(());
    let fresh: Vec<TrialResult> = pool(opts.workers)?.install(|| {
        todo.par_iter()
            .map(|&i| {
                let r = run_trial(space, dataset, opts.master_seed, i);
                let _guard = sink.lock().unwrap_or_else(|e| e.into_inner());
                on_trial(&r);
                r
            })
            .collect()
    });
    trials.extend(fresh);
    rank(&mut trials);
    Ok(SearchReport {
        master_seed: opts.master_seed,
        budget: opts.budget,
        space: space.clone(),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub restart: usize,
    pub seed: u64,
    #[serde(with = "score")]
    pub test_nrmse: f64,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub config: ModelConfig,
    pub master_seed: u64,
    pub restarts: Vec<RestartResult>,
    pub best_restart: usize,
    pub best_nrmse: f64,
    pub best_psi: f64,
    /// Mean and standard deviation over the restarts that finished.
    pub mean_nrmse: f64,
    pub std_nrmse: f64,
}

pub fn restart_seed(master_seed: u64, restart: usize) -> u64 {
    RngStream::new(master_seed, 1)
        .derive(restart as u64)
        .next_u64()
}

/// Trains `restarts` independently seeded models on training plus
/// validation data and scores each on the test split (raw scale, after the
/// transient). Returns the report and the best model.
pub fn final_eval(
    config: &ModelConfig,
    dataset: &TaskDataset,
    restarts: usize,
    master_seed: u64,
    workers: usize,
) -> Result<(FinalReport, FittedModel)> {
    if restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    let runs: Vec<(RestartResult, Option<FittedModel>)> = pool(workers)?.install(|| {
        (0..restarts)
            .into_par_iter()
            .map(|r| {
                let seed = restart_seed(master_seed, r);
                let outcome = config.fit(dataset, seed, true).and_then(|m| {
                    let s = m.score(dataset, dataset.split.test.clone())?;
                    Ok((s, m))
                });
                match outcome {
                    Ok((s, m)) if s.is_finite() => (
                        RestartResult {
                            restart: r,
                            seed,
                            test_nrmse: s,
                            status: TrialStatus::Ok,
                            message: None,
                        },
                        Some(m),
                    ),
                    other => (
                        RestartResult {
                            restart: r,
                            seed,
                            test_nrmse: f64::INFINITY,
                            status: TrialStatus::Diverged,
                            message: Some(match other {
                                Err(e) => e.to_string(),
                                Ok((s, _)) => format!("score {s}"),
                            }),
                        },
                        None,
                    ),
                }
            })
            .collect()
    });
    let (best, best_model) = runs
        .iter()
        .filter_map(|(r, m)| m.as_ref().map(|m| (r, m)))
        .min_by(|a, b| {
            a.0.test_nrmse
                .total_cmp(&b.0.test_nrmse)
                .then(a.0.restart.cmp(&b.0.restart))
        })
        .ok_or_else(|| Error::Diverged(format!("all {restarts} restarts failed")))?;
    let ok: Vec<f64> = runs
        .iter()
        .map(|r| r.0.test_nrmse)
        .filter(|v| v.is_finite())
        .collect();
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let std = (ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ok.len() as f64).sqrt();
    let report = FinalReport {
        config: config.clone(),
        master_seed,
        best_restart: best.restart,
        best_nrmse: best.test_nrmse,
        best_psi: 1.0 - best.test_nrmse,
        mean_nrmse: mean,
        std_nrmse: std,
        restarts: runs.iter().map(|r| r.0.clone()).collect(),
    };
    let model = best_model.clone();
    Ok((report, model))
}
