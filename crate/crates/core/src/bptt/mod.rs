//! Loss, regularization, truncated backpropagation through time, optimizers
//! and the training loop for the gradient-trained cells.

mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::cells::{DropoutMasks, Parameters, RecurrentCell, SequenceCache};
use crate::error::{Error, Result};
use crate::numerics::{norm, RngStream};

pub use optim::{
    adagrad_step, adam_step, momentum_step, nesterov_step, rmsprop_step, sgd_step, LrSchedule,
    Optimizer, OptimizerKind, OptimizerState,
};
pub use train::{fit, train, EpochRecord, GradHyper, History, TrainedModel};

/// Regularization strengths and dropout probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub l1: f64,
    pub l2: f64,
    pub p_drop: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            l1: 0.0,
            l2: 0.0,
            p_drop: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0 && self.l2 >= 0.0) {
            return Err(Error::invalid(format!("negative regularization: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::invalid(format!(
                "dropout probability {} outside [0,1)",
                self.p_drop
            )));
        }
        Ok(())
    }
}

/// Truncation and epoch settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub tau_b: usize,
    pub tau_f: usize,
    pub epochs: usize,
    pub clip_threshold: Option<f64>,
    pub transient_discard: usize,
}

impl TrainSchedule {
    /// BPTT(2n, n) with the default 50-step transient.
    pub fn with_forward(tau_f: usize, epochs: usize) -> Self {
        TrainSchedule {
            tau_b: 2 * tau_f,
            tau_f,
            epochs,
            clip_threshold: None,
            transient_discard: 50,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.tau_f == 0 || self.tau_f > self.tau_b {
            return Err(Error::invalid(format!(
                "need 0 < tau_f <= tau_b, got tau_f={} tau_b={}",
                self.tau_f, self.tau_b
            )));
        }
        if self.tau_f > len {
            return Err(Error::InsufficientHistory(format!(
                "tau_f={} exceeds sequence length {len}",
                self.tau_f
            )));
        }
        if let Some(c) = self.clip_threshold {
            if !(c > 0.0) {
                return Err(Error::invalid(format!(
                    "clip threshold must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean of squared elementwise differences.
pub fn mse(y: &[f64], ystar: &[f64]) -> Result<f64> {
    if y.len() != ystar.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} targets",
            y.len(),
            ystar.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("mse of an empty sequence"));
    }
    Ok(y.iter()
        .zip(ystar)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
}

pub(crate) fn mse_rows(y: &[Vec<f64>], ystar: &[Vec<f64>]) -> Result<f64> {
    let a: Vec<f64> = y.iter().flatten().copied().collect();
    let b: Vec<f64> = ystar.iter().flatten().copied().collect();
    mse(&a, &b)
}

/// `λ1·Σ|w| + λ2·Σw²` over every parameter.
pub fn reg_penalty<P: Parameters>(p: &P, cfg: &LossConfig) -> f64 {
    if cfg.l1 == 0.0 && cfg.l2 == 0.0 {
        return 0.0;
    }
    p.slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|w| cfg.l1 * w.abs() + cfg.l2 * w * w)
        .sum()
}

/// `λ1·sign(w) + 2λ2·w`, with `sign(0) = 0`.
pub fn reg_gradient<P: Parameters>(p: &P, cfg: &LossConfig) -> P {
    let mut g = p.zeros_like();
    add_reg_gradient(p, cfg, &mut g);
    g
}

pub(crate) fn add_reg_gradient<P: Parameters>(p: &P, cfg: &LossConfig, g: &mut P) {
    if cfg.l1 == 0.0 && cfg.l2 == 0.0 {
        return;
    }
    for (ws, gs) in p.slices().into_iter().zip(g.slices_mut()) {
        for (w, gv) in ws.iter().zip(gs.iter_mut()) {
            let sign = if *w > 0.0 {
                1.0
            } else if *w < 0.0 {
                -1.0
            } else {
                0.0
            };
            *gv += cfg.l1 * sign + 2.0 * cfg.l2 * w;
        }
    }
}

/// Bernoulli(1-p) masks for the input and recurrent units, scaled by
/// `1/(1-p)` on the kept entries. Sampled once per sequence.
pub fn sample_dropout_masks(
    n_in: usize,
    n_rec: usize,
    p_drop: f64,
    rng: &mut RngStream,
) -> DropoutMasks {
    if p_drop <= 0.0 {
        return DropoutMasks::ones(n_in, n_rec);
    }
    let keep = 1.0 / (1.0 - p_drop);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if rng.bernoulli(1.0 - p_drop) {
                    keep
                } else {
                    0.0
                }
            })
            .collect()
    };
    let input = draw(n_in);
    let recurrent = draw(n_rec);
    DropoutMasks { input, recurrent }
}

/// Rescales `g` to norm `threshold` when it is longer.
pub fn clip_gradient(g: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, threshold);
    out
}

pub(crate) fn clip_in_place(g: &mut [f64], threshold: f64) -> f64 {
    let n = norm(g);
    if n > threshold {
        let s = threshold / n;
        g.iter_mut().for_each(|v| *v *= s);
    }
    n
}

/// Gradient of the training loss for one cached forward pass.
///
/// The loss is the mean squared error over outputs at positions
/// `>= transient_discard`, plus the regularization penalty. Every `tau_f`
/// steps (window ends `tau_f, 2·tau_f, …, T`), the errors of the last
/// `tau_f` outputs are propagated back `tau_b` steps from the window end,
/// with weights tied across the unrolled replicas.
pub fn bptt_gradients<C: RecurrentCell>(
    cell: &C,
    cache: &SequenceCache<C::Step>,
    targets: &[Vec<f64>],
    sched: &TrainSchedule,
    cfg: &LossConfig,
) -> Result<C> {
    let t_len = cache.len();
    if targets.len() != t_len {
        return Err(Error::dim(format!(
            "{} targets for a {t_len}-step cache",
            targets.len()
        )));
    }
    sched.validate(t_len)?;
    let counted = t_len.saturating_sub(sched.transient_discard);
    let mut grad = cell.zeros_like();
    if counted > 0 {
        let scale = 2.0 / (counted * cell.n_outputs()) as f64;
        let mut end = sched.tau_f.min(t_len);
        loop {
            let inject_from = end.saturating_sub(sched.tau_f).max(sched.transient_discard);
            let start = end.saturating_sub(sched.tau_b);
            backprop_window(
                cell,
                cache,
                targets,
                start,
                end,
                inject_from,
                scale,
                &mut grad,
            );
            if end == t_len {
                break;
            }
            end = (end + sched.tau_f).min(t_len);
        }
    }
    add_reg_gradient(cell, cfg, &mut grad);
    Ok(grad)
}

/// Backpropagates from `end` down to `start`, injecting output errors for
/// positions in `[inject_from, end)` scaled by `scale`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backprop_window<C: RecurrentCell>(
    cell: &C,
    cache: &SequenceCache<C::Step>,
    targets: &[Vec<f64>],
    start: usize,
    end: usize,
    inject_from: usize,
    scale: f64,
    grad: &mut C,
) {
    if inject_from >= end {
        return;
    }
    let mut d_state = vec![0.0; cell.state_len()];
    let mut d_out = vec![0.0; cell.n_outputs()];
    for t in (start..end).rev() {
        let inject = t >= inject_from;
        if inject {
            for ((d, y), ys) in d_out.iter_mut().zip(&cache.outputs[t]).zip(&targets[t]) {
                *d = scale * (y - ys);
            }
        }
        d_state = cell.step_backward(
            &cache.states[t],
            &cache.steps[t],
            &cache.masks,
            inject.then_some(d_out.as_slice()),
            &d_state,
            grad,
        );
    }
}

/// Norms `‖∂L[T-1]/∂h[T-1-k]‖` for `k = 0..T`, where `L[T-1]` is the squared
/// error of the last output and `h` the memory state (the LSTM cell state).
pub fn gradient_norm_profile<C: RecurrentCell>(
    cell: &C,
    cache: &SequenceCache<C::Step>,
    targets: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let t_len = cache.len();
    if targets.len() != t_len || t_len == 0 {
        return Err(Error::dim(format!(
            "{} targets for a {t_len}-step cache",
            targets.len()
        )));
    }
    let last = t_len - 1;
    let d_out: Vec<f64> = cache.outputs[last]
        .iter()
        .zip(&targets[last])
        .map(|(y, ys)| 2.0 * (y - ys))
        .collect();
    let mut scratch = cell.zeros_like();
    let mut d_state = vec![0.0; cell.state_len()];
    let mut norms = Vec::with_capacity(t_len);
    for t in (0..t_len).rev() {
        let out = (t == last).then_some(d_out.as_slice());
        norms.push(norm(&cell.memory_sensitivity(
            &cache.steps[t],
            out,
            &d_state,
        )));
        d_state = cell.step_backward(
            &cache.states[t],
            &cache.steps[t],
            &cache.masks,
            out,
            &d_state,
            &mut scratch,
        );
    }
    Ok(norms)
}
