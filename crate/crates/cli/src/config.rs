//! Experiment configuration file.

use std::path::{Path, PathBuf};

use rnnf_core::evalsearch::{HyperSpace, ModelConfig, ARCHITECTURES};
use rnnf_core::timeseries::{
    impute_adjacent_weeks, impute_spline, load_csv, CsvSchema, DataPreset, SyntheticTask,
    TaskDataset,
};
use serde::{Deserialize, Serialize};

/// Where the series comes from and how it is prepared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        task: SyntheticTask,
        #[serde(default = "default_length")]
        n: usize,
        /// Only the NARMA generator is random.
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        preset: DataPreset,
        #[serde(default)]
        horizon: Option<usize>,
        #[serde(default)]
        impute: Imputation,
    },
}

fn default_length() -> usize {
    15_000
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Missing samples stay zero-filled.
    #[default]
    None,
    AdjacentWeeks,
    Spline,
}

/// A search space given inline or by preset name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceRef {
    Named(String),
    Inline(HyperSpace),
}

/// A fixed model given inline or as a `<task>-<arch>` tuned name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Named(String),
    Inline(ModelConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub arch: String,
    /// Defaults to the architecture's preset space.
    #[serde(default)]
    pub space: Option<SpaceRef>,
    /// Model evaluated by `eval` when no `--model` file is given.
    #[serde(default)]
    pub model: Option<ModelRef>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Overrides the epoch count of every sampled or fixed configuration.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_budget() -> usize {
    500
}

fn default_restarts() -> usize {
    10
}

fn default_workers() -> usize {
    1
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub budget: Option<usize>,
    pub epochs: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, o: &Overrides) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut c: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let DataConfig::Csv { path: p, .. } = &mut c.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        c.master_seed = o.seed.unwrap_or(c.master_seed);
        c.workers = o.workers.unwrap_or(c.workers);
        c.budget = o.budget.unwrap_or(c.budget);
        c.epochs = o.epochs.or(c.epochs);
        c.resolve()?;
        Ok(c)
    }

    /// Replaces preset names with their contents and checks consistency.
    fn resolve(&mut self) -> Result<(), String> {
        if !ARCHITECTURES.contains(&self.arch.as_str()) {
            return Err(format!(
                "unknown architecture {:?}; expected one of {ARCHITECTURES:?}",
                self.arch
            ));
        }
        if self.budget == 0 || self.restarts == 0 || self.workers == 0 {
            return Err("budget, restarts and workers must be positive".into());
        }
        if let DataConfig::Csv { path, .. } = &self.data {
            if !path.is_file() {
                return Err(format!("data file {} does not exist", path.display()));
            }
        }
        let mut space = match self.space.take() {
            None => HyperSpace::preset(&self.arch).map_err(|e| e.to_string())?,
            Some(SpaceRef::Named(name)) => HyperSpace::preset(&name).map_err(|e| e.to_string())?,
            Some(SpaceRef::Inline(s)) => s,
        };
        if let Some(e) = self.epochs {
            space = space.with_epochs(e);
        }
        space.validate().map_err(|e| e.to_string())?;
        if space.arch() != self.arch {
            return Err(format!(
                "space is for {} but arch is {}",
                space.arch(),
                self.arch
            ));
        }
        self.space = Some(SpaceRef::Inline(space));
        if let Some(m) = self.model.take() {
            let mut m = match m {
                ModelRef::Named(name) => {
                    let (task, arch) = name
                        .split_once('-')
                        .ok_or_else(|| format!("model name {name:?} is not <task>-<arch>"))?;
                    ModelConfig::tuned(arch, task).map_err(|e| e.to_string())?
                }
                ModelRef::Inline(m) => m,
            };
            if let Some(e) = self.epochs {
                m = m.with_epochs(e);
            }
            if m.arch() != self.arch {
                return Err(format!(
                    "model is for {} but arch is {}",
                    m.arch(),
                    self.arch
                ));
            }
            self.model = Some(ModelRef::Inline(m));
        }
        Ok(())
    }

    pub fn space(&self) -> &HyperSpace {
        match &self.space {
            Some(SpaceRef::Inline(s)) => s,
            _ => unreachable!("resolved on load"),
        }
    }

    pub fn model(&self) -> Option<&ModelConfig> {
        match &self.model {
            Some(ModelRef::Inline(m)) => Some(m),
            _ => None,
        }
    }

    pub fn dataset(&self) -> rnnf_core::Result<TaskDataset> {
        match &self.data {
            DataConfig::Synthetic { task, n, seed } => task.dataset(*n, *seed),
            DataConfig::Csv {
                path,
                schema,
                preset,
                horizon,
                impute,
            } => {
                let series = load_csv(path, schema)?;
                let series = match impute {
                    Imputation::None => series,
                    Imputation::AdjacentWeeks => {
                        let step = schema.step_seconds.ok_or_else(|| {
                            rnnf_core::Error::InvalidArgument(
                                "adjacent-week imputation needs step_seconds".into(),
                            )
                        })?;
                        let (s, r) =
                            impute_adjacent_weeks(&series, (7 * 24 * 3600 / step) as usize)?;
                        log::info!(
                            "imputed {} values ({} mean fallbacks)",
                            r.replaced,
                            r.mean_fallbacks.len()
                        );
                        s
                    }
                    Imputation::Spline => {
                        let (s, r) = impute_spline(&series)?;
                        log::info!("imputed {} values", r.replaced);
                        s
                    }
                };
                TaskDataset::from_series(&series, &preset.spec(*horizon))
            }
        }
    }
}
