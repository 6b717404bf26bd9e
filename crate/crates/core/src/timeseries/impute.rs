use serde::{Deserialize, Serialize};

use super::series::{Quality, RawSeries};
use crate::error::{Error, Result};

/// Outcome of an imputation pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub replaced: usize,
    /// Indices where no clean weekly neighbor existed and the series mean
    /// was used instead.
    pub mean_fallbacks: Vec<usize>,
}

/// Replaces each corrupted value with the mean of the same slot one week
/// earlier and one week later, skipping neighbors that are themselves
/// corrupted. Replaced entries are flagged `Ok`.
pub fn impute_adjacent_weeks(
    s: &RawSeries,
    period_per_week: usize,
) -> Result<(RawSeries, ImputeReport)> {
    let n = s.len();
    if period_per_week == 0 {
        return Err(Error::invalid("weekly period must be positive"));
    }
    let mut out = s.clone();
    let mut report = ImputeReport::default();
    if s.count(Quality::Corrupted) == 0 {
        return Ok((out, report));
    }
    if n < 3 * period_per_week {
        return Err(Error::invalid(format!(
            "adjacent-week imputation needs three weeks ({} samples), got {n}",
            3 * period_per_week
        )));
    }
    let clean = |i: usize| s.flags[i] != Quality::Corrupted;
    let mut fallback_mean = None;
    for i in 0..n {
        if clean(i) {
            continue;
        }
        let before = i.checked_sub(period_per_week).filter(|&j| clean(j));
        let after = Some(i + period_per_week).filter(|&j| j < n && clean(j));
        out.values[i] = match (before, after) {
            (Some(a), Some(b)) => 0.5 * (s.values[a] + s.values[b]),
            (Some(a), None) | (None, Some(a)) => s.values[a],
            (None, None) => {
                let m = *fallback_mean.get_or_insert_with(|| clean_mean(s));
                log::warn!("index {i}: both weekly neighbors corrupted, using the series mean");
                report.mean_fallbacks.push(i);
                m
            }
        };
        out.flags[i] = Quality::Ok;
        report.replaced += 1;
    }
    Ok((out, report))
}

fn clean_mean(s: &RawSeries) -> f64 {
    let (sum, k) = s
        .values
        .iter()
        .zip(&s.flags)
        .filter(|(_, &f)| f != Quality::Corrupted)
        .fold((0.0, 0usize), |(a, k), (v, _)| (a + v, k + 1));
    if k == 0 {
        0.0
    } else {
        sum / k as f64
    }
}

/// Fits a natural cubic spline through the `Ok` samples (abscissa: seconds
/// since the first timestamp) and evaluates it at the corrupted ones.
pub fn impute_spline(s: &RawSeries) -> Result<(RawSeries, ImputeReport)> {
    let mut out = s.clone();
    let mut report = ImputeReport::default();
    if s.count(Quality::Corrupted) == 0 {
        return Ok((out, report));
    }
    let Some(&t0) = s.timestamps.first() else {
        return Ok((out, report));
    };
    let abscissa = |i: usize| (s.timestamps[i] - t0).num_seconds() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..s.len())
        .filter(|&i| s.flags[i] == Quality::Ok)
        .map(|i| (abscissa(i), s.values[i]))
        .unzip();
    let spline = NaturalSpline::fit(&xs, &ys)?;
    for i in 0..s.len() {
        if s.flags[i] == Quality::Corrupted {
            out.values[i] = spline.eval(abscissa(i));
            out.flags[i] = Quality::Ok;
            report.replaced += 1;
        }
    }
    Ok((out, report))
}

/// Interpolating cubic spline with zero second derivative at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    /// Needs at least four knots with strictly increasing abscissae.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if y.len() != n {
            return Err(Error::dim(format!("{n} abscissae, {} ordinates", y.len())));
        }
        if n < 4 {
            return Err(Error::invalid(format!(
                "spline needs at least 4 clean points, got {n}"
            )));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "spline abscissae must be strictly increasing",
            ));
        }
        // tridiagonal system for interior second derivatives (Thomas algorithm)
        let k = n - 2;
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        for i in (0..k).rev() {
            let upper = if i + 1 < k { h[i + 1] * m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
        Ok(NaturalSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    /// Linear extrapolation outside the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let seg = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[seg], self.x[seg + 1]);
        let (y0, y1) = (self.y[seg], self.y[seg + 1]);
        let (m0, m1) = (self.m[seg], self.m[seg + 1]);
        let h = x1 - x0;
        if t < x0 || t > x1 {
            // slope at the nearest end, curvature there is zero
            let (xe, ye, slope) = if t < x0 {
                (x0, y0, (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0)
            } else {
                (x1, y1, (y1 - y0) / h + h * (m0 + 2.0 * m1) / 6.0)
            };
            return ye + slope * (t - xe);
        }
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}
