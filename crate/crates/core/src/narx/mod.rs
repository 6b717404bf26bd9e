//! NARX network: tapped delay lines feeding a feedforward core, trained in
//! series-parallel mode with Levenberg-Marquardt and run in closed loop.

mod lm;
mod mlp;

use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::timeseries::TaskDataset;

pub use lm::{LmHistory, LmRecord, LmState, SeriesParallelData};
pub use mlp::{Mlp, MlpTrace};

/// `[x[t-dx], …, x[t-1], y[t-dy], …, y[t-1]]`, channels of each sample
/// kept together. Needs `t >= max(dx, dy)`.
pub fn assemble_input(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    dx: usize,
    dy: usize,
    t: usize,
) -> Result<Vec<f64>> {
    if t < dx.max(dy) || t > xs.len() || t > ys.len() {
        return Err(Error::InsufficientHistory(format!(
            "position {t} with delays ({dx}, {dy}) over {} inputs and {} outputs",
            xs.len(),
            ys.len()
        )));
    }
    let mut v = Vec::new();
    for x in &xs[t - dx..t] {
        v.extend_from_slice(x);
    }
    for y in &ys[t - dy..t] {
        v.extend_from_slice(y);
    }
    Ok(v)
}

/// Rolling window of the last `dx` inputs and `dy` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TdlBuffer {
    dx: usize,
    dy: usize,
    xs: VecDeque<Vec<f64>>,
    ys: VecDeque<Vec<f64>>,
}

impl TdlBuffer {
    pub fn new(dx: usize, dy: usize) -> Self {
        TdlBuffer {
            dx,
            dy,
            xs: VecDeque::with_capacity(dx + 1),
            ys: VecDeque::with_capacity(dy + 1),
        }
    }

    pub fn push_input(&mut self, x: Vec<f64>) {
        push_bounded(&mut self.xs, x, self.dx);
    }

    pub fn push_output(&mut self, y: Vec<f64>) {
        push_bounded(&mut self.ys, y, self.dy);
    }

    pub fn is_full(&self) -> bool {
        self.xs.len() == self.dx && self.ys.len() == self.dy
    }

    /// Oldest sample first, inputs before outputs.
    pub fn assemble(&self) -> Result<Vec<f64>> {
        if !self.is_full() {
            return Err(Error::InsufficientHistory(format!(
                "delay lines hold {}/{} inputs and {}/{} outputs",
                self.xs.len(),
                self.dx,
                self.ys.len(),
                self.dy
            )));
        }
        Ok(self.xs.iter().chain(&self.ys).flatten().copied().collect())
    }
}

fn push_bounded(q: &mut VecDeque<Vec<f64>>, v: Vec<f64>, cap: usize) {
    if cap == 0 {
        return;
    }
    if q.len() == cap {
        q.pop_front();
    }
    q.push_back(v);
}

/// Hyperparameters of one NARX run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarxHyper {
    pub n_hidden: usize,
    pub n_layers: usize,
    /// Common delay for the input and output lines.
    pub delay: usize,
    /// Learning-rate knob; the initial damping is `1e-3 / eta0`.
    pub eta0: f64,
    /// Weight of the mean squared parameter value in the loss.
    pub l2: f64,
    pub epochs: usize,
    #[serde(default = "default_transient")]
    pub transient: usize,
}

fn default_transient() -> usize {
    50
}

impl NarxHyper {
    pub fn validate(&self) -> Result<()> {
        if self.n_hidden == 0 || self.n_layers == 0 || self.delay == 0 {
            return Err(Error::invalid(format!(
                "NARX sizes must be positive: {self:?}"
            )));
        }
        if !(self.eta0 > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::invalid(format!(
                "NARX needs eta0 > 0 and l2 >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn initial_damping(&self) -> f64 {
        1e-3 / self.eta0
    }

    /// Coefficient on `Σθ²` for a network with `n_params` weights: the
    /// penalty is `l2` times the mean squared weight.
    pub fn penalty_per_weight(&self, n_params: usize) -> f64 {
        self.l2 / n_params as f64
    }
}

/// Delay-line sizes plus the feedforward core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxModel {
    pub dx: usize,
    pub dy: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub mlp: Mlp,
}

impl NarxModel {
    pub fn init(
        n_x: usize,
        n_y: usize,
        dx: usize,
        dy: usize,
        n_hidden: usize,
        n_layers: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let n_in = dx * n_x + dy * n_y;
        Ok(NarxModel {
            dx,
            dy,
            n_x,
            n_y,
            mlp: Mlp::init(n_in, n_hidden, n_layers, n_y, rng)?,
        })
    }

    /// First position whose delay lines are full.
    pub fn min_history(&self) -> usize {
        self.dx.max(self.dy)
    }

    /// One-step output at `t` with the output line fed by `ys`.
    pub fn predict_series_parallel(
        &self,
        xs: &[Vec<f64>],
        ys: &[Vec<f64>],
        t: usize,
    ) -> Result<Vec<f64>> {
        self.mlp
            .forward(&assemble_input(xs, ys, self.dx, self.dy, t)?)
    }

    /// Runs positions `min_history()..end`. The output line receives
    /// `teacher[t]` for `t < teacher.len()` and the network's own output
    /// afterwards; ground truth beyond the teacher prefix is never read.
    /// Returns the outputs for positions `min_history()..end`.
    pub fn closed_loop(
        &self,
        xs: &[Vec<f64>],
        teacher: &[Vec<f64>],
        end: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let d = self.min_history();
        if teacher.len() < d {
            return Err(Error::InsufficientHistory(format!(
                "closed loop needs {d} teacher outputs, got {}",
                teacher.len()
            )));
        }
        if end > xs.len() {
            return Err(Error::dim(format!(
                "closed loop to {end} with {} inputs",
                xs.len()
            )));
        }
        let mut buf = TdlBuffer::new(self.dx, self.dy);
        for t in d - self.dx..d {
            buf.push_input(xs[t].clone());
        }
        for y in &teacher[d - self.dy..d] {
            buf.push_output(y.clone());
        }
        let mut out = Vec::with_capacity(end.saturating_sub(d));
        for t in d..end {
            let y = self.mlp.forward(&buf.assemble()?)?;
            buf.push_input(xs[t].clone());
            buf.push_output(if t < teacher.len() {
                teacher[t].clone()
            } else {
                y.clone()
            });
            out.push(y);
        }
        Ok(out)
    }

    /// Transformed-scale closed-loop forecasts for `range` of `dataset`.
    /// Labels seed the output delay line up to position
    /// `range.start + 1 - horizon`, the last one observable when the
    /// forecast starts; from there on the network feeds back its own
    /// outputs.
    pub fn forecast(&self, dataset: &TaskDataset, range: Range<usize>) -> Result<Vec<f64>> {
        let d = self.min_history();
        if range.start < d {
            return Err(Error::InsufficientHistory(format!(
                "forecast from {} needs {d} prior samples",
                range.start
            )));
        }
        let known = (range.start + 1).saturating_sub(dataset.horizon).max(d);
        let teacher = dataset.target_rows();
        let out = self.closed_loop(&dataset.inputs, &teacher[..known.min(range.end)], range.end)?;
        Ok(out[range.start - d..].iter().map(|y| y[0]).collect())
    }
}

/// Builds and trains a NARX model on `dataset` (training split, or
/// training plus validation when `include_valid` is set).
pub fn train(
    dataset: &TaskDataset,
    hyper: &NarxHyper,
    seed: u64,
    include_valid: bool,
) -> Result<(NarxModel, LmHistory)> {
    hyper.validate()?;
    let mut rng = RngStream::new(seed, 0).derive(1);
    let mut model = NarxModel::init(
        dataset.n_inputs(),
        1,
        hyper.delay,
        hyper.delay,
        hyper.n_hidden,
        hyper.n_layers,
        &mut rng,
    )?;
    let end = if include_valid {
        dataset.split.valid.end
    } else {
        dataset.split.train.end
    };
    let ys = dataset.target_rows();
    let first = (hyper.transient).max(model.min_history());
    let data = SeriesParallelData::new(&dataset.inputs, &ys, model.dx, model.dy, first..end)?;
    let l2 = hyper.penalty_per_weight(model.mlp.num_params());
    let history = data.train(&mut model.mlp, l2, hyper.initial_damping(), hyper.epochs)?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&a| vec![a]).collect()
    }

    #[test]
    fn tdl_examples() {
        let xs = col(&[1.0, 2.0, 3.0]);
        let ys = col(&[10.0, 20.0, 30.0]);
        assert_eq!(
            assemble_input(&xs, &ys, 2, 2, 2).unwrap(),
            vec![1.0, 2.0, 10.0, 20.0]
        );
        assert_eq!(assemble_input(&xs, &ys, 1, 1, 2).unwrap(), vec![2.0, 20.0]);
        assert!(assemble_input(&xs, &ys, 2, 2, 1).is_err());
        let xs2 = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(assemble_input(&xs2, &ys, 2, 3, 3).unwrap().len(), 4 + 3);
    }

    #[test]
    fn ring_buffer_matches_slice_assembly() {
        let xs: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64, -(t as f64)]).collect();
        let ys = col(&(0..10).map(|t| 100.0 + t as f64).collect::<Vec<_>>());
        let mut b = TdlBuffer::new(3, 2);
        for t in 0..10 {
            if t >= 3 {
                assert_eq!(
                    b.assemble().unwrap(),
                    assemble_input(&xs, &ys, 3, 2, t).unwrap()
                );
            }
            b.push_input(xs[t].clone());
            b.push_output(ys[t].clone());
        }
    }
}
