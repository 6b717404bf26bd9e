use std::ops::Range;

use chrono::{Datelike, Months, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::generators::{gen_mackey_glass, gen_mso, gen_narma};
use super::series::{Channel, Quality, RawSeries};
use super::transform::{total_lag, Pipeline, TransformStep, ZStats};
use crate::error::{Error, Result};

/// How labeled positions are divided into train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "lowercase")]
pub enum SplitSpec {
    /// Train and validation sizes are floored, the test split takes the rest.
    Fractions { train: f64, valid: f64, test: f64 },
    /// Calendar months counted from the first day of the first sample's month.
    Months { train: u32, valid: u32, test: u32 },
}

/// Contiguous, ordered, non-empty index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

impl SplitBounds {
    pub fn train_valid(&self) -> Range<usize> {
        self.train.start..self.valid.end
    }
}

impl SplitSpec {
    pub fn synthetic() -> Self {
        SplitSpec::Fractions {
            train: 0.6,
            valid: 0.2,
            test: 0.2,
        }
    }

    /// Splits `n` positions. Month splits read the calendar from
    /// `timestamps`, one per position.
    pub fn bounds(&self, n: usize, timestamps: &[NaiveDateTime]) -> Result<SplitBounds> {
        let (a, b, c) = match *self {
            SplitSpec::Fractions { train, valid, test } => {
                let fr = [train, valid, test];
                if fr.iter().any(|f| !(0.0..=1.0).contains(f))
                    || (train + valid + test - 1.0).abs() > 1e-9
                {
                    return Err(Error::invalid(format!(
                        "split fractions {fr:?} must be in [0,1] and sum to 1"
                    )));
                }
                // guard against products like 0.7·10 = 7.000000000000001 on the wrong side
                let a = ((n as f64) * train + 1e-9).floor() as usize;
                let b = a + ((n as f64) * valid + 1e-9).floor() as usize;
                (a, b.min(n), n)
            }
            SplitSpec::Months { train, valid, test } => {
                if timestamps.len() != n {
                    return Err(Error::dim(format!(
                        "{n} positions but {} timestamps",
                        timestamps.len()
                    )));
                }
                let Some(first) = timestamps.first() else {
                    return Err(Error::invalid("cannot split an empty series"));
                };
                let month0 = NaiveDate::from_ymd_opt(first.year(), first.month(), 1)
                    .expect("valid month start");
                let edge = |m: u32| -> Result<usize> {
                    let d = month0
                        .checked_add_months(Months::new(m))
                        .ok_or_else(|| Error::invalid("month boundary out of range"))?
                        .and_hms_opt(0, 0, 0)
                        .expect("midnight");
                    Ok(timestamps.partition_point(|t| *t < d))
                };
                (
                    edge(train)?,
                    edge(train + valid)?,
                    edge(train + valid + test)?,
                )
            }
        };
        if a == 0 || b <= a || c <= b {
            return Err(Error::invalid(format!(
                "split {self:?} of {n} positions leaves an empty part ({a}/{}/{})",
                b.saturating_sub(a),
                c.saturating_sub(b)
            )));
        }
        Ok(SplitBounds {
            train: 0..a,
            valid: a..b,
            test: b..c,
        })
    }
}

/// Supervised pairs: input `t` is `[target[t], exog[0][t], …]`, label `t`
/// is `target[t + tf]`. The last `tf` samples have no label and are dropped.
pub fn build_supervised(
    target: &[f64],
    exog: &[Vec<f64>],
    tf: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if tf == 0 {
        return Err(Error::invalid("forecast horizon must be at least 1"));
    }
    if tf >= target.len() {
        return Err(Error::invalid(format!(
            "horizon {tf} leaves no labeled samples in a series of length {}",
            target.len()
        )));
    }
    if let Some(c) = exog.iter().find(|c| c.len() != target.len()) {
        return Err(Error::dim(format!(
            "exogenous channel of length {} vs target {}",
            c.len(),
            target.len()
        )));
    }
    let m = target.len() - tf;
    let inputs = (0..m)
        .map(|t| {
            std::iter::once(target[t])
                .chain(exog.iter().map(|c| c[t]))
                .collect()
        })
        .collect();
    Ok((inputs, target[tf..].to_vec()))
}

/// Preprocessing, split and horizon for one data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub pipeline: Vec<TransformStep>,
    pub split: SplitSpec,
    pub horizon: usize,
}

/// Named combinations used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataPreset {
    /// z-score only, 60/20/20.
    Synthetic,
    /// Hourly call volumes: log, lag-24 differencing, z-score, 70/15/15,
    /// 24 steps ahead.
    Orange,
    /// 10-minute electricity load: lag-144 differencing, z-score, three
    /// months train, one valid, one test, 144 steps ahead.
    Acea,
    /// Hourly load with temperature: lag-24 differencing, z-score, ten
    /// months train, one valid, one test, 24 steps ahead.
    Gefcom,
}

impl DataPreset {
    pub fn spec(self, horizon: Option<usize>) -> DatasetSpec {
        use TransformStep::*;
        let (pipeline, split, tf) = match self {
            DataPreset::Synthetic => (vec![Zscore], SplitSpec::synthetic(), 1),
            DataPreset::Orange => (
                vec![Log, SeasonalDiff { lag: 24 }, Zscore],
                SplitSpec::Fractions {
                    train: 0.7,
                    valid: 0.15,
                    test: 0.15,
                },
                24,
            ),
            DataPreset::Acea => (
                vec![SeasonalDiff { lag: 144 }, Zscore],
                SplitSpec::Months {
                    train: 3,
                    valid: 1,
                    test: 1,
                },
                144,
            ),
            DataPreset::Gefcom => (
                vec![SeasonalDiff { lag: 24 }, Zscore],
                SplitSpec::Months {
                    train: 10,
                    valid: 1,
                    test: 1,
                },
                24,
            ),
        };
        DatasetSpec {
            pipeline,
            split,
            horizon: horizon.unwrap_or(tf),
        }
    }
}

/// Generated benchmark tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticTask {
    Mg,
    Narma,
    Mso,
}

pub const NARMA_ORDER: usize = 10;

impl SyntheticTask {
    pub fn horizon(self) -> usize {
        match self {
            SyntheticTask::Mg => 12,
            SyntheticTask::Narma => 1,
            SyntheticTask::Mso => 10,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SyntheticTask::Mg => "mg",
            SyntheticTask::Narma => "narma",
            SyntheticTask::Mso => "mso",
        }
    }

    /// Hourly-stamped series of length `n`. Only NARMA uses `seed`; its
    /// driving noise becomes the exogenous channel `u`.
    pub fn generate(self, n: usize, seed: u64) -> Result<RawSeries> {
        match self {
            SyntheticTask::Mg => RawSeries::hourly("mg", gen_mackey_glass(n)?, vec![]),
            SyntheticTask::Mso => RawSeries::hourly("mso", gen_mso(n)?, vec![]),
            SyntheticTask::Narma => {
                let g = gen_narma(n, NARMA_ORDER, seed)?;
                RawSeries::hourly(
                    "narma",
                    g.output,
                    vec![Channel {
                        name: "u".into(),
                        values: g.input,
                    }],
                )
            }
        }
    }

    pub fn spec(self) -> DatasetSpec {
        DataPreset::Synthetic.spec(Some(self.horizon()))
    }

    /// Generates the series and assembles the standard dataset.
    pub fn dataset(self, n: usize, seed: u64) -> Result<TaskDataset> {
        TaskDataset::from_series(&self.generate(n, seed)?, &self.spec())
    }
}

/// Supervised data ready for training, with the fitted preprocessing and the
/// raw series needed to score forecasts on the original scale.
///
/// Labeled position `t` has input from raw index `t + lag` and its label
/// sits at raw index `t + horizon + lag`, where `lag` is the number of raw
/// samples consumed by seasonal differencing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub name: String,
    pub inputs: Vec<Vec<f64>>,
    /// Transformed-scale labels.
    pub targets: Vec<f64>,
    pub split: SplitBounds,
    pub horizon: usize,
    pub pipeline: Pipeline,
    pub exog_stats: Vec<ZStats>,
    pub raw: Vec<f64>,
    pub timestamps: Vec<NaiveDateTime>,
}

impl TaskDataset {
    /// Transforms the target, standardizes exogenous channels on the
    /// training split, and pairs inputs with horizon-shifted labels.
    /// Corrupted entries must be imputed first.
    pub fn from_series(series: &RawSeries, spec: &DatasetSpec) -> Result<Self> {
        if series.count(Quality::Corrupted) > 0 {
            return Err(Error::invalid(format!(
                "{} corrupted entries remain; impute before building a dataset",
                series.count(Quality::Corrupted)
            )));
        }
        let lag = total_lag(&spec.pipeline);
        let n = series.len();
        if n <= lag + spec.horizon {
            return Err(Error::invalid(format!(
                "series of length {n} too short for lag {lag} and horizon {}",
                spec.horizon
            )));
        }
        let m = n - lag - spec.horizon;
        let split = spec.split.bounds(m, &series.timestamps[lag..lag + m])?;
        let n_train = split.train.end;
        let (pipeline, z) = Pipeline::fit(&spec.pipeline, &series.values, n_train)?;
        let mut exog = Vec::with_capacity(series.exogenous.len());
        let mut exog_stats = Vec::with_capacity(series.exogenous.len());
        for c in &series.exogenous {
            let aligned = &c.values[lag..];
            let st = ZStats::fit(&aligned[..n_train]).map_err(|e| match e {
                Error::Undefined(m) => Error::Undefined(format!("channel {}: {m}", c.name)),
                e => e,
            })?;
            exog.push(aligned.iter().map(|&v| st.apply(v)).collect::<Vec<_>>());
            exog_stats.push(st);
        }
        let (inputs, targets) = build_supervised(&z, &exog, spec.horizon)?;
        debug_assert_eq!(inputs.len(), m);
        Ok(TaskDataset {
            name: series.name.clone(),
            inputs,
            targets,
            split,
            horizon: spec.horizon,
            pipeline,
            exog_stats,
            raw: series.values.clone(),
            timestamps: series.timestamps.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_rows(&self) -> Vec<Vec<f64>> {
        self.targets.iter().map(|&v| vec![v]).collect()
    }

    /// Raw index holding the label of position `t`.
    pub fn label_raw_index(&self, t: usize) -> usize {
        t + self.horizon + self.pipeline.lag()
    }

    pub fn label_timestamp(&self, t: usize) -> NaiveDateTime {
        self.timestamps[self.label_raw_index(t)]
    }

    /// Raw-scale ground truth for the labels in `range`.
    pub fn raw_truth(&self, range: Range<usize>) -> Vec<f64> {
        range.map(|t| self.raw[self.label_raw_index(t)]).collect()
    }

    /// Raw-scale forecasts from transformed-scale predictions for the
    /// consecutive positions starting at `start`.
    pub fn to_raw(&self, preds: &[f64], start: usize) -> Vec<f64> {
        preds
            .iter()
            .enumerate()
            .map(|(k, &p)| self.pipeline.invert_point(p, start + k + self.horizon))
            .collect()
    }

    /// Naive forecast: the last observed raw value, `horizon` steps early.
    pub fn persistence(&self, range: Range<usize>) -> Vec<f64> {
        range.map(|t| self.raw[t + self.pipeline.lag()]).collect()
    }
}
