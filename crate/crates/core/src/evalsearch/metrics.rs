use crate::error::{Error, Result};

/// Number of leading outputs dropped before scoring.
pub const TRANSIENT: usize = 50;

/// Normalized root mean squared error:
/// `sqrt(mean (y - y*)² / mean (y* - mean y*)²)`.
pub fn nrmse(y: &[f64], ystar: &[f64]) -> Result<f64> {
    if y.len() != ystar.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} targets",
            y.len(),
            ystar.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::invalid(format!(
            "NRMSE needs at least 2 points, got {}",
            y.len()
        )));
    }
    let n = y.len() as f64;
    let mean = ystar.iter().sum::<f64>() / n;
    let var = ystar.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Undefined("NRMSE of a constant ground truth".into()));
    }
    let mse = y
        .iter()
        .zip(ystar)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok((mse / var).sqrt())
}

/// Prediction accuracy `1 - NRMSE`.
pub fn accuracy_psi(y: &[f64], ystar: &[f64]) -> Result<f64> {
    Ok(1.0 - nrmse(y, ystar)?)
}

/// NRMSE after dropping the first [`TRANSIENT`] points, or none of them
/// when the sequence is too short to afford it.
pub fn scored_nrmse(y: &[f64], ystar: &[f64]) -> Result<f64> {
    let skip = if y.len() >= TRANSIENT + 2 {
        TRANSIENT
    } else {
        0
    };
    nrmse(&y[skip.min(y.len())..], &ystar[skip.min(ystar.len())..])
}
