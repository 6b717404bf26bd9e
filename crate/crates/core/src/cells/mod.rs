//! Forward dynamics and parameter containers for the gradient-trained
//! recurrent cells: Elman (ERNN), LSTM and GRU.
//!
//! Every cell also carries a linear readout to the regression output. The
//! recurrent state is a flat vector: `h` for ERNN and GRU, `[h; y]` (cell
//! state then block output) for LSTM.

mod ernn;
mod gru;
mod lstm;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub use ernn::{ernn_forward, ErnnParams};
pub use gru::{gru_forward, GruParams};
pub use lstm::{lstm_forward, LstmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Ernn,
    Lstm,
    Gru,
}

impl CellKind {
    pub fn tag(self) -> &'static str {
        match self {
            CellKind::Ernn => "ernn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

/// Flat view over every trainable array of a parameter container.
///
/// Gradients use the same container type, so optimizers can treat both
/// sides as `&[f64]` / `&mut [f64]` pairs.
pub trait Parameters: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    /// Overwrites every parameter from `flat` (same order as [`flatten`]).
    ///
    /// [`flatten`]: Parameters::flatten
    fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut off = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Multiplicative dropout masks, fixed over all steps of one sequence.
///
/// Entries are either 0 or `1/(1-p)`, so inference uses all-ones masks.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub input: Vec<f64>,
    pub recurrent: Vec<f64>,
}

impl DropoutMasks {
    pub fn ones(n_in: usize, n_rec: usize) -> Self {
        DropoutMasks {
            input: vec![1.0; n_in],
            recurrent: vec![1.0; n_rec],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.input.iter().chain(&self.recurrent).all(|&m| m == 1.0)
    }
}

/// Everything recorded by a forward pass that backpropagation needs.
#[derive(Debug, Clone)]
pub struct SequenceCache<S> {
    pub inputs: Vec<Vec<f64>>,
    /// `states[t]` is the state entering step `t`; length is `T + 1`.
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub steps: Vec<S>,
    pub masks: DropoutMasks,
}

impl<S> SequenceCache<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("states always holds the initial state")
    }
}

/// One recurrent cell with a linear readout.
pub trait RecurrentCell: Parameters + Send + Sync {
    /// Per-step intermediate values (gate activations and the like).
    type Step: Clone + Send;

    fn kind(&self) -> CellKind;
    fn n_inputs(&self) -> usize;
    fn n_hidden(&self) -> usize;
    fn n_outputs(&self) -> usize;

    fn state_len(&self) -> usize {
        self.n_hidden()
    }

    /// Slice of the state vector holding the memory `h` (the LSTM cell
    /// state, the hidden state otherwise).
    fn memory_range(&self) -> Range<usize> {
        0..self.n_hidden()
    }

    fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.state_len()]
    }

    /// Advances one step; returns `(next_state, output, step_cache)`.
    fn step(
        &self,
        state: &[f64],
        x: &[f64],
        masks: &DropoutMasks,
    ) -> (Vec<f64>, Vec<f64>, Self::Step);

    /// Backpropagates one step.
    ///
    /// `d_out` is the loss gradient w.r.t. this step's output, `d_next` the
    /// gradient w.r.t. the state leaving the step. Parameter gradients are
    /// accumulated into `grad`; the gradient w.r.t. the entering state is
    /// returned.
    #[allow(clippy::too_many_arguments)]
    fn step_backward(
        &self,
        prev_state: &[f64],
        step: &Self::Step,
        masks: &DropoutMasks,
        d_out: Option<&[f64]>,
        d_next: &[f64],
        grad: &mut Self,
    ) -> Vec<f64>;

    /// Total derivative of the loss w.r.t. the memory `h` leaving a step,
    /// given the gradient w.r.t. the full state leaving it (`d_next`) and
    /// w.r.t. the step's output. Used by the gradient-norm diagnostic.
    fn memory_sensitivity(
        &self,
        step: &Self::Step,
        d_out: Option<&[f64]>,
        d_next: &[f64],
    ) -> Vec<f64>;

    /// Runs the cell over `xs` from `state0`.
    fn forward(
        &self,
        xs: &[Vec<f64>],
        state0: &[f64],
        masks: &DropoutMasks,
    ) -> Result<SequenceCache<Self::Step>> {
        check_len("initial state", state0.len(), self.state_len())?;
        check_len("input mask", masks.input.len(), self.n_inputs())?;
        check_len("recurrent mask", masks.recurrent.len(), self.n_hidden())?;
        let mut cache = SequenceCache {
            inputs: Vec::with_capacity(xs.len()),
            states: Vec::with_capacity(xs.len() + 1),
            outputs: Vec::with_capacity(xs.len()),
            steps: Vec::with_capacity(xs.len()),
            masks: masks.clone(),
        };
        cache.states.push(state0.to_vec());
        for (t, x) in xs.iter().enumerate() {
            if x.len() != self.n_inputs() {
                return Err(Error::dim(format!(
                    "input at step {t} has {} entries, cell expects {}",
                    x.len(),
                    self.n_inputs()
                )));
            }
            let (next, out, step) = self.step(cache.final_state(), x, masks);
            cache.inputs.push(x.clone());
            cache.states.push(next);
            cache.outputs.push(out);
            cache.steps.push(step);
        }
        Ok(cache)
    }

    /// Outputs only, without keeping a cache.
    fn predict(&self, xs: &[Vec<f64>], state0: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        check_len("initial state", state0.len(), self.state_len())?;
        let masks = DropoutMasks::ones(self.n_inputs(), self.n_hidden());
        let mut state = state0.to_vec();
        let mut outs = Vec::with_capacity(xs.len());
        for x in xs {
            check_len("input", x.len(), self.n_inputs())?;
            let (next, out, _) = self.step(&state, x, &masks);
            state = next;
            outs.push(out);
        }
        Ok((outs, state))
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::dim(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// Uniform `[0,1]` draw scaled by `1/√Nh`.
pub(crate) fn init_matrix(rows: usize, cols: usize, nh: usize, rng: &mut RngStream) -> Matrix {
    let s = 1.0 / (nh as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.unit() * s)
}

/// Shape of a cell: input, hidden and output sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDims {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
}

impl CellDims {
    pub fn new(n_inputs: usize, n_hidden: usize, n_outputs: usize) -> Self {
        CellDims {
            n_inputs,
            n_hidden,
            n_outputs,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_hidden == 0 || self.n_outputs == 0 {
            return Err(Error::invalid(format!(
                "cell dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Any of the three gradient-trained cells, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum AnyCell {
    Ernn(ErnnParams),
    Lstm(LstmParams),
    Gru(GruParams),
}

impl AnyCell {
    /// Weights uniform on `[0,1]` scaled by `1/√Nh`, biases zero.
    pub fn init(kind: CellKind, dims: CellDims, rng: &mut RngStream) -> Result<AnyCell> {
        Ok(match kind {
            CellKind::Ernn => AnyCell::Ernn(ErnnParams::init(dims, rng)?),
            CellKind::Lstm => AnyCell::Lstm(LstmParams::init(dims, rng)?),
            CellKind::Gru => AnyCell::Gru(GruParams::init(dims, rng)?),
        })
    }

    pub fn kind(&self) -> CellKind {
        match self {
            AnyCell::Ernn(_) => CellKind::Ernn,
            AnyCell::Lstm(_) => CellKind::Lstm,
            AnyCell::Gru(_) => CellKind::Gru,
        }
    }
}

/// Dispatches a generic body over the concrete cell inside an [`AnyCell`].
#[macro_export]
macro_rules! with_cell {
    ($any:expr, $c:ident => $body:expr) => {
        match $any {
            $crate::cells::AnyCell::Ernn($c) => $body,
            $crate::cells::AnyCell::Lstm($c) => $body,
            $crate::cells::AnyCell::Gru($c) => $body,
        }
    };
}

macro_rules! impl_parameters {
    ($t:ty; matrices: [$($m:ident),*]; vectors: [$($v:ident),*]) => {
        impl $crate::cells::Parameters for $t {
            fn slices(&self) -> Vec<&[f64]> {
                vec![$(self.$m.as_slice(),)* $(self.$v.as_slice(),)*]
            }

            fn slices_mut(&mut self) -> Vec<&mut [f64]> {
                vec![$(self.$m.as_mut_slice(),)* $(self.$v.as_mut_slice(),)*]
            }
        }
    };
}
pub(crate) use impl_parameters;
