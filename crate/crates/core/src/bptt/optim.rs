use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Nesterov,
    Adagrad,
    Rmsprop,
    Adam,
}

/// Learning rate as a function of the update counter `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// `η0 / (1 + αk)`
    Fractional {
        alpha: f64,
    },
    /// `η0 · e^(-αk)`
    Exponential {
        alpha: f64,
    },
}

impl LrSchedule {
    pub fn rate(&self, eta0: f64, k: u64) -> f64 {
        let k = k as f64;
        match *self {
            LrSchedule::Constant => eta0,
            LrSchedule::Fractional { alpha } => eta0 / (1.0 + alpha * k),
            LrSchedule::Exponential { alpha } => eta0 * (-alpha * k).exp(),
        }
    }
}

/// Hyperparameters of an optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub eta0: f64,
    pub schedule: LrSchedule,
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Optimizer {
    /// Defaults: μ = 0.9, β1 = 0.9, β2 = 0.999, ε = 1e-8, δ = 0.01,
    /// constant learning rate.
    pub fn new(kind: OptimizerKind, eta0: f64) -> Self {
        Optimizer {
            kind,
            eta0,
            schedule: LrSchedule::Constant,
            mu: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            delta: 0.01,
        }
    }

    pub fn with_schedule(mut self, schedule: LrSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Experiment preset: SGD and Nesterov decay the rate by
    /// `η0/(1 + 1e-6·k)` per update, the adaptive methods keep it constant.
    pub fn preset(kind: OptimizerKind, eta0: f64) -> Self {
        let o = Optimizer::new(kind, eta0);
        match kind {
            OptimizerKind::Sgd | OptimizerKind::Nesterov => {
                o.with_schedule(LrSchedule::Fractional { alpha: 1e-6 })
            }
            _ => o,
        }
    }

    pub fn state(&self, n_params: usize) -> OptimizerState {
        OptimizerState::new(*self, n_params)
    }
}

/// Accumulators of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: Optimizer,
    /// Velocity (momentum, Nesterov), squared-gradient sum (Adagrad),
    /// running mean square (RMSprop) or first moment (Adam).
    pub acc1: Vec<f64>,
    /// Adam's second moment.
    pub acc2: Vec<f64>,
    /// Number of updates applied so far.
    pub k: u64,
}

impl OptimizerState {
    pub fn new(config: Optimizer, n: usize) -> Self {
        let acc2 = if config.kind == OptimizerKind::Adam {
            vec![0.0; n]
        } else {
            Vec::new()
        };
        OptimizerState {
            config,
            acc1: vec![0.0; n],
            acc2,
            k: 0,
        }
    }

    /// Learning rate the next update will use.
    pub fn learning_rate(&self) -> f64 {
        self.config.schedule.rate(self.config.eta0, self.k)
    }

    /// Point at which the gradient must be evaluated: `W + μV` for Nesterov,
    /// `W` for every other method.
    pub fn lookahead(&self, params: &[f64]) -> Vec<f64> {
        match self.config.kind {
            OptimizerKind::Nesterov => params
                .iter()
                .zip(&self.acc1)
                .map(|(w, v)| w + self.config.mu * v)
                .collect(),
            _ => params.to_vec(),
        }
    }

    /// One descent update. For Nesterov, `g` must be the gradient at
    /// [`lookahead`](Self::lookahead).
    pub fn step(&mut self, params: &mut [f64], g: &[f64]) -> Result<()> {
        if params.len() != g.len() || params.len() != self.acc1.len() {
            return Err(Error::dim(format!(
                "{} params, {} gradients, {} accumulator entries",
                params.len(),
                g.len(),
                self.acc1.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i}")));
        }
        let eta = self.learning_rate();
        let c = self.config;
        self.k += 1;
        match c.kind {
            OptimizerKind::Sgd => sgd_step(params, g, eta),
            OptimizerKind::Momentum => momentum_step(params, &mut self.acc1, g, eta, c.mu),
            OptimizerKind::Nesterov => nesterov_step(params, &mut self.acc1, g, eta, c.mu),
            OptimizerKind::Adagrad => adagrad_step(params, &mut self.acc1, g, eta, c.eps),
            OptimizerKind::Rmsprop => rmsprop_step(params, &mut self.acc1, g, eta, c.delta, c.eps),
            OptimizerKind::Adam => adam_step(
                params,
                &mut self.acc1,
                &mut self.acc2,
                g,
                eta,
                c.beta1,
                c.beta2,
                c.eps,
                self.k,
            ),
        }
        Ok(())
    }
}

/// `W -= η g`
pub fn sgd_step(w: &mut [f64], g: &[f64], eta: f64) {
    for (w, g) in w.iter_mut().zip(g) {
        *w -= eta * g;
    }
}

/// `V = μV - ηg; W += V`
pub fn momentum_step(w: &mut [f64], v: &mut [f64], g: &[f64], eta: f64, mu: f64) {
    for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = mu * *v - eta * g;
        *w += *v;
    }
}

/// Same recursion as momentum; the caller evaluates `g` at `W + μV`.
pub fn nesterov_step(w: &mut [f64], v: &mut [f64], g: &[f64], eta: f64, mu: f64) {
    momentum_step(w, v, g, eta, mu)
}

/// `G += g²; W -= η g / (√G + ε)`
pub fn adagrad_step(w: &mut [f64], sum_sq: &mut [f64], g: &[f64], eta: f64, eps: f64) {
    for ((w, s), g) in w.iter_mut().zip(sum_sq.iter_mut()).zip(g) {
        *s += g * g;
        *w -= eta * g / (s.sqrt() + eps);
    }
}

/// `v = (1-δ)v + δg²; W -= η g / (√v + ε)`
pub fn rmsprop_step(w: &mut [f64], mean_sq: &mut [f64], g: &[f64], eta: f64, delta: f64, eps: f64) {
    for ((w, v), g) in w.iter_mut().zip(mean_sq.iter_mut()).zip(g) {
        *v = (1.0 - delta) * *v + delta * g * g;
        *w -= eta * g / (v.sqrt() + eps);
    }
}

/// Bias-corrected Adam update `W -= η m̂ / √(v̂ + ε)`; `k` is the 1-based
/// index of this update.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    w: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    eta: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    k: u64,
) {
    let c1 = 1.0 - beta1.powf(k as f64);
    let c2 = 1.0 - beta2.powf(k as f64);
    for i in 0..w.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] -= eta * m_hat / (v_hat + eps).sqrt();
    }
}
