use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    add_reg_gradient, backprop_window, clip_in_place, mse_rows, sample_dropout_masks, LossConfig,
    Optimizer, TrainSchedule,
};
use crate::cells::{AnyCell, CellDims, CellKind, RecurrentCell};
use crate::error::{Error, Result};
use crate::numerics::{norm, RngStream};
use crate::timeseries::TaskDataset;
use crate::with_cell;

/// Full configuration of one gradient-trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradHyper {
    pub cell: CellKind,
    pub n_hidden: usize,
    pub optimizer: Optimizer,
    pub loss: LossConfig,
    pub schedule: TrainSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    /// Absent when no validation sequence was supplied.
    pub valid_mse: Option<f64>,
    pub learning_rate: f64,
    /// Mean pre-clipping gradient norm over the epoch's updates.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// CSV with columns `epoch,train_mse,valid_mse,learning_rate,grad_norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "epoch,train_mse,valid_mse,learning_rate,grad_norm").map_err(io)?;
        for r in &self.epochs {
            let valid = r.valid_mse.map_or(String::new(), |v| v.to_string());
            writeln!(
                f,
                "{},{},{},{},{}",
                r.epoch, r.train_mse, valid, r.learning_rate, r.grad_norm
            )
            .map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// A trained cell together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hyper: GradHyper,
    pub seed: u64,
    pub params: AnyCell,
}

/// Trains `cell` in place on one long sequence.
///
/// Each epoch starts from a zero state and sweeps windows ending at
/// `tau_f, 2·tau_f, …`. A window re-runs the forward pass from the state
/// stored at `end - tau_b` with the current parameters, backpropagates the
/// errors of its last `tau_f` outputs, and applies one update with the loss
/// averaged over those outputs. Outputs before `transient_discard` never
/// contribute. Dropout masks are redrawn every epoch.
///
/// When `valid` is given, its MSE is recorded each epoch by running the
/// model over the training inputs and continuing into the validation
/// inputs, with the first `transient_discard` validation outputs dropped.
pub fn fit<C: RecurrentCell>(
    cell: &mut C,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    valid: Option<(&[Vec<f64>], &[Vec<f64>])>,
    opt: &Optimizer,
    loss: &LossConfig,
    sched: &TrainSchedule,
    rng: &mut RngStream,
) -> Result<History> {
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::dim(format!("{n} inputs but {} targets", ys.len())));
    }
    loss.validate()?;
    sched.validate(n)?;
    let mut history = History::default();
    if sched.epochs == 0 {
        return Ok(history);
    }
    let mut state = opt.state(cell.num_params());
    let mut stored = vec![cell.zero_state(); n + 1];
    let mut flat = cell.flatten();
    let mut eval = cell.clone();

    for epoch in 0..sched.epochs {
        let masks = sample_dropout_masks(cell.n_inputs(), cell.n_hidden(), loss.p_drop, rng);
        let mut sq_sum = 0.0;
        let mut sq_count = 0usize;
        let mut gn_sum = 0.0;
        let mut updates = 0usize;
        let mut end = sched.tau_f.min(n);
        loop {
            let start = end.saturating_sub(sched.tau_b);
            let inject_from = end.saturating_sub(sched.tau_f).max(sched.transient_discard);
            // Nesterov evaluates the gradient ahead of the current point
            let at = state.lookahead(&flat);
            eval.unflatten(&at);
            let cache = eval.forward(&xs[start..end], &stored[start], &masks)?;
            for (k, s) in cache.states.iter().enumerate().skip(1) {
                stored[start + k].clone_from(s);
            }
            if inject_from < end {
                let count = (end - inject_from) * cell.n_outputs();
                let mut grad = cell.zeros_like();
                backprop_window(
                    &eval,
                    &cache,
                    &ys[start..end],
                    0,
                    end - start,
                    inject_from - start,
                    2.0 / count as f64,
                    &mut grad,
                );
                let err = mse_rows(&cache.outputs[inject_from - start..], &ys[inject_from..end])?;
                if !err.is_finite() {
                    return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
                }
                sq_sum += err * count as f64;
                sq_count += count;
                add_reg_gradient(&eval, loss, &mut grad);
                let mut g = grad.flatten();
                let gn = match sched.clip_threshold {
                    Some(c) => clip_in_place(&mut g, c),
                    None => norm(&g),
                };
                gn_sum += gn;
                updates += 1;
                state
                    .step(&mut flat, &g)
                    .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
            }
            if end == n {
                break;
            }
            end = (end + sched.tau_f).min(n);
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        cell.unflatten(&flat);
        let valid_mse = match valid {
            Some((vx, vy)) => Some(continuation_mse(cell, xs, vx, vy, sched.transient_discard)?),
            None => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_mse: if sq_count > 0 {
                sq_sum / sq_count as f64
            } else {
                f64::NAN
            },
            valid_mse,
            learning_rate: state.learning_rate(),
            grad_norm: if updates > 0 {
                gn_sum / updates as f64
            } else {
                0.0
            },
        });
    }
    Ok(history)
}

/// MSE on `vx → vy` after warming the state up on `warm`.
fn continuation_mse<C: RecurrentCell>(
    cell: &C,
    warm: &[Vec<f64>],
    vx: &[Vec<f64>],
    vy: &[Vec<f64>],
    discard: usize,
) -> Result<f64> {
    let (_, s) = cell.predict(warm, &cell.zero_state())?;
    let (out, _) = cell.predict(vx, &s)?;
    let d = discard.min(out.len().saturating_sub(1));
    let e = mse_rows(&out[d..], &vy[d..])?;
    if !e.is_finite() {
        return Err(Error::Diverged("non-finite validation error".into()));
    }
    Ok(e)
}

/// Initializes a cell for `dataset` and trains it on the training split,
/// or on training plus validation when `include_valid` is set (the final
/// evaluation protocol). Validation MSE is tracked only in the first case.
pub fn train(
    dataset: &TaskDataset,
    hyper: &GradHyper,
    seed: u64,
    include_valid: bool,
) -> Result<(TrainedModel, History)> {
    let mut rng = RngStream::new(seed, 0);
    let mut init_rng = rng.derive(1);
    let dims = CellDims::new(dataset.n_inputs(), hyper.n_hidden, 1);
    let mut params = AnyCell::init(hyper.cell, dims, &mut init_rng)?;
    let ys = dataset.target_rows();
    let fit_end = if include_valid {
        dataset.split.valid.end
    } else {
        dataset.split.train.end
    };
    let xs = &dataset.inputs[..fit_end];
    let valid = (!include_valid).then(|| {
        let r = dataset.split.valid.clone();
        (&dataset.inputs[r.clone()], &ys[r])
    });
    let history = with_cell!(&mut params, c => fit(
        c,
        xs,
        &ys[..fit_end],
        valid,
        &hyper.optimizer,
        &hyper.loss,
        &hyper.schedule,
        &mut rng,
    ))?;
    Ok((
        TrainedModel {
            hyper: hyper.clone(),
            seed,
            params,
        },
        history,
    ))
}

impl TrainedModel {
    /// Predictions (transformed scale) for every labeled position of the
    /// dataset, running from a zero state at index 0.
    pub fn predict_all(&self, dataset: &TaskDataset) -> Result<Vec<f64>> {
        with_cell!(&self.params, c => {
            let (out, _) = c.predict(&dataset.inputs, &c.zero_state())?;
            Ok(out.into_iter().map(|o| o[0]).collect())
        })
    }
}
