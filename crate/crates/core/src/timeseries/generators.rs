use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Mackey-Glass delay system integrated with fourth-order Runge-Kutta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MackeyGlass {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub exponent: f64,
    pub x0: f64,
    pub dt: f64,
    /// Integration steps between emitted samples.
    pub stride: usize,
}

impl Default for MackeyGlass {
    fn default() -> Self {
        MackeyGlass {
            tau: 17.0,
            alpha: 0.2,
            beta: 0.1,
            exponent: 10.0,
            x0: 1.2,
            dt: 0.1,
            stride: 10,
        }
    }
}

impl MackeyGlass {
    pub fn derivative(&self, x: f64, x_delayed: f64) -> f64 {
        mackey_glass_derivative(x, x_delayed, self.alpha, self.beta, self.exponent)
    }

    /// `n` samples starting with `x(0) = x0`, one every `stride` steps.
    pub fn generate(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("Mackey-Glass length must be positive"));
        }
        if !(self.dt > 0.0) || self.stride == 0 || !(self.tau >= 0.0) {
            return Err(Error::invalid(format!(
                "invalid Mackey-Glass settings {self:?}"
            )));
        }
        let lag = self.tau / self.dt;
        let total = (n - 1) * self.stride;
        let mut hist = Vec::with_capacity(total + 1);
        hist.push(self.x0);
        // value at fractional grid position `pos` (may be negative)
        let at = |hist: &[f64], pos: f64| -> f64 {
            if pos <= 0.0 {
                return self.x0;
            }
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 || i + 1 >= hist.len() {
                hist[i.min(hist.len() - 1)]
            } else {
                hist[i] * (1.0 - frac) + hist[i + 1] * frac
            }
        };
        let h = self.dt;
        for k in 0..total {
            let x = hist[k];
            let p = k as f64 - lag;
            let d0 = at(&hist, p);
            let dm = at(&hist, p + 0.5);
            let d1 = at(&hist, p + 1.0);
            let k1 = self.derivative(x, d0);
            let k2 = self.derivative(x + 0.5 * h * k1, dm);
            let k3 = self.derivative(x + 0.5 * h * k2, dm);
            let k4 = self.derivative(x + h * k3, d1);
            hist.push(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        Ok(hist.into_iter().step_by(self.stride).collect())
    }
}

/// `α·x_τ / (1 + x_τ^p) − β·x`
pub fn mackey_glass_derivative(
    x: f64,
    x_delayed: f64,
    alpha: f64,
    beta: f64,
    exponent: f64,
) -> f64 {
    alpha * x_delayed / (1.0 + x_delayed.powf(exponent)) - beta * x
}

/// Mackey-Glass series with the default settings.
pub fn gen_mackey_glass(n: usize) -> Result<Vec<f64>> {
    MackeyGlass::default().generate(n)
}

/// Input/output pair of a NARMA system.
#[derive(Debug, Clone, PartialEq)]
pub struct Narma {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    /// Seed that produced a bounded trajectory.
    pub seed: u64,
}

const NARMA_BOUND: f64 = 1e3;
const NARMA_MAX_RETRIES: u64 = 1000;
/// Upper end of the driving noise range. With `U[0,1]` the order-10
/// recursion diverges within a few dozen steps for every draw.
pub const NARMA_INPUT_MAX: f64 = 0.5;

/// NARMA system of order `r` driven by `U[0, 0.5]` noise, zero history.
///
/// `output[0] = 0`; `output[t+1]` depends on `input[t-r..=t]`. If the output
/// leaves `[-1e3, 1e3]` the draw is repeated with the next seed.
pub fn gen_narma(n: usize, r: usize, seed: u64) -> Result<Narma> {
    gen_narma_scaled(n, r, NARMA_INPUT_MAX, seed)
}

/// [`gen_narma`] with noise drawn from `U[0, input_max]`.
pub fn gen_narma_scaled(n: usize, r: usize, input_max: f64, seed: u64) -> Result<Narma> {
    if n <= r {
        return Err(Error::invalid(format!(
            "NARMA length {n} must exceed order {r}"
        )));
    }
    if !(input_max > 0.0) {
        return Err(Error::invalid(format!(
            "NARMA input range must be positive, got {input_max}"
        )));
    }
    for s in seed..seed.saturating_add(NARMA_MAX_RETRIES) {
        let mut rng = RngStream::new(s, 0);
        let input: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, input_max)).collect();
        if let Some(output) = narma_response(&input, r) {
            return Ok(Narma {
                input,
                output,
                seed: s,
            });
        }
        log::debug!("NARMA trajectory for seed {s} diverged, retrying");
    }
    Err(Error::Diverged(format!(
        "NARMA diverged for {NARMA_MAX_RETRIES} consecutive seeds"
    )))
}

/// Runs the NARMA recursion on a given input. `None` if it leaves the bound.
pub fn narma_response(input: &[f64], r: usize) -> Option<Vec<f64>> {
    let n = input.len();
    let mut y = vec![0.0; n];
    let past = |v: &[f64], i: isize| if i < 0 { 0.0 } else { v[i as usize] };
    for t in 0..n.saturating_sub(1) {
        let ti = t as isize;
        let window: f64 = (0..=r as isize).map(|i| past(&y, ti - i)).sum();
        let next =
            0.3 * y[t] + 0.05 * y[t] * window + 1.5 * past(input, ti - r as isize) * input[t] + 0.1;
        if !next.is_finite() || next.abs() > NARMA_BOUND {
            return None;
        }
        y[t + 1] = next;
    }
    Some(y)
}

/// Four superimposed sines at integer times `0..n`.
pub fn gen_mso(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("MSO length must be positive"));
    }
    Ok((0..n).map(|t| mso_value(t as f64)).collect())
}

pub fn mso_value(t: f64) -> f64 {
    (0.2 * t).sin() + (0.311 * t).sin() + (0.42 * t).sin() + (0.51 * t).sin()
}
