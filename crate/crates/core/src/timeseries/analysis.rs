use crate::error::{Error, Result};

/// Biased sample autocorrelation for lags `0..=max_lag`, normalized so the
/// lag-0 value is 1.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= max_lag {
        return Err(Error::invalid(format!(
            "autocorrelation to lag {max_lag} needs more than {max_lag} samples, got {n}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::Undefined(
            "autocorrelation of a constant series".into(),
        ));
    }
    Ok((0..=max_lag)
        .map(|k| {
            c[..n - k]
                .iter()
                .zip(&c[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / c0
        })
        .collect())
}

/// First lag at which the autocorrelation crosses or touches zero, the
/// usual decorrelation horizon.
pub fn first_zero_crossing(acf: &[f64]) -> Option<usize> {
    acf.iter().position(|&v| v <= 0.0)
}
