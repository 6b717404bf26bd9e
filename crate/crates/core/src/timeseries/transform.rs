use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `d[t] = x[t+s] − x[t]`, length `len(x) − s`.
pub fn seasonal_difference(x: &[f64], s: usize) -> Result<Vec<f64>> {
    if s == 0 || x.len() <= s {
        return Err(Error::invalid(format!(
            "seasonal lag {s} needs a series longer than the lag, got {}",
            x.len()
        )));
    }
    Ok((s..x.len()).map(|t| x[t] - x[t - s]).collect())
}

/// Rebuilds `x` from its differences and first `s` samples.
pub fn invert_seasonal(d: &[f64], prefix: &[f64]) -> Result<Vec<f64>> {
    let s = prefix.len();
    if s == 0 {
        return Err(Error::invalid("seasonal prefix is empty"));
    }
    let mut x = Vec::with_capacity(d.len() + s);
    x.extend_from_slice(prefix);
    for (t, v) in d.iter().enumerate() {
        let prev = x[t];
        x.push(v + prev);
    }
    Ok(x)
}

/// `ln(x + 1)`; entries must exceed −1.
pub fn log_transform(x: &[f64]) -> Result<Vec<f64>> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > -1.0 {
                Ok(v.ln_1p())
            } else {
                Err(Error::invalid(format!(
                    "log transform needs values above -1, entry {i} is {v}"
                )))
            }
        })
        .collect()
}

/// `exp(y) − 1`
pub fn invert_log(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v.exp_m1()).collect()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZStats {
    pub mean: f64,
    pub std: f64,
}

impl ZStats {
    pub fn fit(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid(
                "cannot fit z-score statistics on an empty slice",
            ));
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Undefined(format!(
                "z-score undefined: standard deviation is {std}"
            )));
        }
        Ok(ZStats { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

pub fn zscore(x: &[f64], stats: &ZStats) -> Vec<f64> {
    x.iter().map(|&v| stats.apply(v)).collect()
}

pub fn invert_zscore(z: &[f64], stats: &ZStats) -> Vec<f64> {
    z.iter().map(|&v| stats.invert(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TransformStep {
    Log,
    SeasonalDiff { lag: usize },
    Zscore,
}

/// A fitted sequence of transforms with everything needed to undo it.
///
/// Stage `k` holds the input of step `k` in full; `offsets[k]` is the raw
/// index of its first element. The output of the last step is the
/// transformed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub steps: Vec<TransformStep>,
    pub stats: Option<ZStats>,
    stages: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

/// Raw samples lost at the front of the series by `steps`.
pub fn total_lag(steps: &[TransformStep]) -> usize {
    steps
        .iter()
        .map(|s| match s {
            TransformStep::SeasonalDiff { lag } => *lag,
            _ => 0,
        })
        .sum()
}

impl Pipeline {
    /// Applies `steps` in order to `raw`. The z-score step fits its
    /// statistics on the first `fit_len` samples of its own input.
    pub fn fit(
        steps: &[TransformStep],
        raw: &[f64],
        fit_len: usize,
    ) -> Result<(Pipeline, Vec<f64>)> {
        if steps
            .iter()
            .filter(|s| **s == TransformStep::Zscore)
            .count()
            > 1
        {
            return Err(Error::invalid("at most one z-score step is supported"));
        }
        let mut cur = raw.to_vec();
        let mut offset = 0;
        let mut stages = Vec::with_capacity(steps.len());
        let mut offsets = Vec::with_capacity(steps.len());
        let mut stats = None;
        for step in steps {
            let next = match *step {
                TransformStep::Log => log_transform(&cur)?,
                TransformStep::SeasonalDiff { lag } => seasonal_difference(&cur, lag)?,
                TransformStep::Zscore => {
                    if fit_len == 0 || fit_len > cur.len() {
                        return Err(Error::invalid(format!(
                            "z-score fit length {fit_len} outside 1..={}",
                            cur.len()
                        )));
                    }
                    let st = ZStats::fit(&cur[..fit_len])?;
                    stats = Some(st);
                    zscore(&cur, &st)
                }
            };
            stages.push(cur);
            offsets.push(offset);
            if let TransformStep::SeasonalDiff { lag } = *step {
                offset += lag;
            }
            cur = next;
        }
        Ok((
            Pipeline {
                steps: steps.to_vec(),
                stats,
                stages,
                offsets,
            },
            cur,
        ))
    }

    /// Raw index of transformed index 0.
    pub fn lag(&self) -> usize {
        total_lag(&self.steps)
    }

    /// Full inverse using the stored prefixes of every differencing stage.
    pub fn invert(&self, transformed: &[f64]) -> Result<Vec<f64>> {
        let mut cur = transformed.to_vec();
        for (k, step) in self.steps.iter().enumerate().rev() {
            cur = match *step {
                TransformStep::Log => invert_log(&cur),
                TransformStep::SeasonalDiff { lag } => {
                    invert_seasonal(&cur, &self.stages[k][..lag])?
                }
                TransformStep::Zscore => invert_zscore(&cur, &self.stats.expect("fitted z-score")),
            };
        }
        Ok(cur)
    }

    /// Maps one transformed-scale value at transformed index `i` back to the
    /// raw scale. Differencing steps add the true stage value one season
    /// earlier, so this inverts a single forecast without touching others.
    pub fn invert_point(&self, value: f64, i: usize) -> f64 {
        let raw_index = i + self.lag();
        let mut v = value;
        for (k, step) in self.steps.iter().enumerate().rev() {
            v = match *step {
                TransformStep::Log => v.exp_m1(),
                TransformStep::SeasonalDiff { lag } => {
                    v + self.stages[k][raw_index - lag - self.offsets[k]]
                }
                TransformStep::Zscore => self.stats.expect("fitted z-score").invert(v),
            };
        }
        v
    }
}

/// Relative closeness used for round-trip checks: `|a − b| ≤ tol·max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
