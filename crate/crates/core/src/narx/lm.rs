use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assemble_input;
use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Rows of the Jacobian materialized at once when forming `JᵀJ`.
const JACOBIAN_CHUNK: usize = 2048;
const MAX_INFLATIONS: usize = 10;
/// Damping beyond which training is considered stalled.
const MAX_DAMPING: f64 = 1e12;

/// Teacher-forced training pairs: delay-line inputs built from true outputs.
#[derive(Debug, Clone)]
pub struct SeriesParallelData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmState {
    pub damping: f64,
    /// Regularized loss at the current parameters.
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmRecord {
    pub epoch: usize,
    pub loss: f64,
    pub damping: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LmHistory {
    pub epochs: Vec<LmRecord>,
}

impl SeriesParallelData {
    /// Pairs for every position in `positions` (each must be at least
    /// `max(dx, dy)`).
    pub fn new(
        xs: &[Vec<f64>],
        ys: &[Vec<f64>],
        dx: usize,
        dy: usize,
        positions: Range<usize>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("no training positions"));
        }
        if positions.end > ys.len() {
            return Err(Error::dim(format!(
                "positions up to {} with {} outputs",
                positions.end,
                ys.len()
            )));
        }
        let inputs = positions
            .clone()
            .map(|t| assemble_input(xs, ys, dx, dy, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(SeriesParallelData {
            inputs,
            targets: ys[positions].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn n_residuals(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }

    /// Mean squared error plus `l2·Σθ²`.
    pub fn loss(&self, mlp: &Mlp, params: &[f64], l2: f64) -> Result<f64> {
        let mut sse = 0.0;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let tr = mlp.trace_with(params, x)?;
            sse += tr
                .output()
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(sse / self.n_residuals() as f64 + l2 * params.iter().map(|v| v * v).sum::<f64>())
    }

    /// `JᵀJ` and `Jᵀr` for residuals `r = (ŷ − y)/√N`.
    pub fn normal_equations(
        &self,
        mlp: &Mlp,
        params: &[f64],
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let p = params.len();
        let scale = 1.0 / (self.n_residuals() as f64).sqrt();
        let mut jtj = DMatrix::<f64>::zeros(p, p);
        let mut jtr = DVector::<f64>::zeros(p);
        let mut chunk = DMatrix::<f64>::zeros(JACOBIAN_CHUNK, p);
        let mut row = vec![0.0; p];
        let mut filled = 0;
        let flush = |chunk: &DMatrix<f64>, filled: usize, jtj: &mut DMatrix<f64>| {
            let c = chunk.rows(0, filled);
            jtj.gemm_tr(1.0, &c, &c, 1.0);
        };
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let tr = mlp.trace_with(params, x)?;
            for (k, (out, target)) in tr.output().iter().zip(y).enumerate() {
                mlp.output_gradient_with(params, &tr, k, &mut row);
                let r = (out - target) * scale;
                for (j, g) in row.iter().enumerate() {
                    let v = g * scale;
                    chunk[(filled, j)] = v;
                    jtr[j] += v * r;
                }
                filled += 1;
                if filled == JACOBIAN_CHUNK {
                    flush(&chunk, filled, &mut jtj);
                    filled = 0;
                }
            }
        }
        if filled > 0 {
            flush(&chunk, filled, &mut jtj);
        }
        Ok((jtj, jtr))
    }

    /// Solves `(JᵀJ + (damping + l2)I)Δ = −(Jᵀr + l2·θ)`. `None` when the
    /// system is not numerically positive definite.
    pub fn lm_step(
        jtj: &DMatrix<f64>,
        jtr: &DVector<f64>,
        params: &[f64],
        l2: f64,
        damping: f64,
    ) -> Option<Vec<f64>> {
        let mut a = jtj.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += damping + l2;
        }
        let rhs = DVector::from_iterator(
            params.len(),
            jtr.iter().zip(params).map(|(g, w)| -(g + l2 * w)),
        );
        let sol = a.cholesky()?.solve(&rhs);
        sol.iter()
            .all(|v| v.is_finite())
            .then(|| sol.iter().copied().collect())
    }

    /// Gradient of [`loss`](Self::loss): `2(Jᵀr + l2·θ)`.
    pub fn gradient(&self, mlp: &Mlp, params: &[f64], l2: f64) -> Result<Vec<f64>> {
        let (_, jtr) = self.normal_equations(mlp, params)?;
        Ok(jtr
            .iter()
            .zip(params)
            .map(|(g, w)| 2.0 * (g + l2 * w))
            .collect())
    }

    /// Levenberg-Marquardt: each epoch linearizes once and tries steps with
    /// growing damping (×10, at most ten times) until the loss drops; an
    /// accepted step divides the damping by 10.
    pub fn train(
        &self,
        mlp: &mut Mlp,
        l2: f64,
        initial_damping: f64,
        epochs: usize,
    ) -> Result<LmHistory> {
        if !(initial_damping > 0.0) {
            return Err(Error::invalid(format!(
                "initial damping must be positive, got {initial_damping}"
            )));
        }
        let mut history = LmHistory::default();
        if epochs == 0 {
            return Ok(history);
        }
        let mut state = LmState {
            damping: initial_damping,
            loss: self.loss(mlp, &mlp.params, l2)?,
        };
        if !state.loss.is_finite() {
            return Err(Error::Diverged("non-finite initial NARX loss".into()));
        }
        for epoch in 0..epochs {
            let (jtj, jtr) = self.normal_equations(mlp, &mlp.params)?;
            let mut accepted = false;
            for _ in 0..=MAX_INFLATIONS {
                if let Some(delta) = Self::lm_step(&jtj, &jtr, &mlp.params, l2, state.damping) {
                    let trial: Vec<f64> =
                        mlp.params.iter().zip(&delta).map(|(w, d)| w + d).collect();
                    let loss = self.loss(mlp, &trial, l2)?;
                    if loss < state.loss {
                        mlp.params = trial;
                        state.loss = loss;
                        state.damping = (state.damping / 10.0).max(f64::MIN_POSITIVE);
                        accepted = true;
                        break;
                    }
                }
                state.damping *= 10.0;
            }
            history.epochs.push(LmRecord {
                epoch,
                loss: state.loss,
                damping: state.damping,
                accepted,
            });
            if !accepted && state.damping > MAX_DAMPING {
                log::debug!("Levenberg-Marquardt stalled at epoch {epoch}");
                break;
            }
        }
        Ok(history)
    }
}
