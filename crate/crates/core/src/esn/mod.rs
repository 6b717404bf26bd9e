//! Echo state network: a fixed sparse random reservoir with a ridge
//! regression readout.

mod ridge;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::sparse::SparseRows;
use crate::numerics::{rescale_to_radius, Matrix, RngStream};
use crate::timeseries::TaskDataset;

pub use ridge::{ridge_fit, ridge_fit_dual, ridge_fit_primal};

const RESERVOIR_RETRIES: u64 = 10;

/// The eight reservoir and readout hyperparameters plus the washout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnHyper {
    pub n_hidden: usize,
    /// Target spectral radius of the recurrent matrix.
    pub rho: f64,
    /// Fraction of nonzero recurrent weights.
    pub connectivity: f64,
    /// Variance of the state noise used while harvesting.
    pub noise: f64,
    /// Input weight scale.
    pub omega_in: f64,
    /// Scale applied to the fed-back output signal.
    pub omega_out: f64,
    /// Feedback weight scale.
    pub omega_fb: f64,
    pub l2: f64,
    #[serde(default = "default_washout")]
    pub washout: usize,
}

fn default_washout() -> usize {
    50
}

impl EsnHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_hidden > 0
            && self.rho > 0.0
            && self.connectivity > 0.0
            && self.connectivity <= 1.0
            && self.noise >= 0.0
            && self.omega_in >= 0.0
            && self.omega_out >= 0.0
            && self.omega_fb >= 0.0
            && self.l2 >= 0.0;
        if !ok {
            return Err(Error::invalid(format!(
                "invalid ESN hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Fixed random part of an ESN.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ReservoirRepr", into = "ReservoirRepr")]
pub struct Reservoir {
    /// `Nh×Nh` recurrent weights.
    pub w: Matrix,
    /// `Nh×Ni`
    pub w_in: Matrix,
    /// `Nh×No`
    pub w_fb: Matrix,
    pub omega_out: f64,
    pub noise: f64,
    op: SparseRows,
}

impl PartialEq for Reservoir {
    fn eq(&self, o: &Self) -> bool {
        self.w == o.w
            && self.w_in == o.w_in
            && self.w_fb == o.w_fb
            && self.omega_out == o.omega_out
            && self.noise == o.noise
    }
}

/// On-disk layout: the recurrent matrix as `(row, col, value)` triplets.
#[derive(Serialize, Deserialize)]
struct ReservoirRepr {
    n_hidden: usize,
    recurrent: Vec<(usize, usize, f64)>,
    w_in: Matrix,
    w_fb: Matrix,
    omega_out: f64,
    noise: f64,
}

impl From<Reservoir> for ReservoirRepr {
    fn from(r: Reservoir) -> Self {
        let n = r.w.rows();
        let recurrent = (0..n)
            .flat_map(|i| {
                r.w.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, v)| (i, j, *v))
            })
            .collect();
        ReservoirRepr {
            n_hidden: n,
            recurrent,
            w_in: r.w_in,
            w_fb: r.w_fb,
            omega_out: r.omega_out,
            noise: r.noise,
        }
    }
}

impl From<ReservoirRepr> for Reservoir {
    fn from(r: ReservoirRepr) -> Self {
        let mut w = Matrix::zeros(r.n_hidden, r.n_hidden);
        for (i, j, v) in r.recurrent {
            w.set(i, j, v);
        }
        Reservoir::from_parts(w, r.w_in, r.w_fb, r.omega_out, r.noise)
    }
}

impl Reservoir {
    pub fn from_parts(w: Matrix, w_in: Matrix, w_fb: Matrix, omega_out: f64, noise: f64) -> Self {
        let op = SparseRows::from_dense(&w);
        Reservoir {
            w,
            w_in,
            w_fb,
            omega_out,
            noise,
            op,
        }
    }

    /// Random reservoir: exactly `round(Rc·Nh²)` recurrent entries drawn
    /// from `U[-1,1]`, rescaled to spectral radius `rho`; input and feedback
    /// weights from `U[-1,1]` times `omega_in` and `omega_fb`. A draw whose
    /// recurrent matrix has zero spectral radius is repeated.
    pub fn build(hyper: &EsnHyper, n_in: usize, n_out: usize, rng: &mut RngStream) -> Result<Self> {
        hyper.validate()?;
        let nh = hyper.n_hidden;
        let nnz = ((hyper.connectivity * (nh * nh) as f64).round() as usize).clamp(1, nh * nh);
        let mut w = None;
        for attempt in 0..RESERVOIR_RETRIES {
            let mut m = Matrix::zeros(nh, nh);
            for idx in rng.sample_indices(nh * nh, nnz) {
                m.as_mut_slice()[idx] = rng.uniform(-1.0, 1.0);
            }
            match rescale_to_radius(&m, hyper.rho) {
                Ok(r) => {
                    w = Some(r);
                    break;
                }
                Err(Error::ZeroRadius) => {
                    log::debug!("reservoir draw {attempt} has zero spectral radius, redrawing")
                }
                Err(e) => return Err(e),
            }
        }
        let w = w.ok_or(Error::ZeroRadius)?;
        let w_in = Matrix::from_fn(nh, n_in, |_, _| rng.uniform(-1.0, 1.0) * hyper.omega_in);
        let w_fb = Matrix::from_fn(nh, n_out, |_, _| rng.uniform(-1.0, 1.0) * hyper.omega_fb);
        Ok(Reservoir::from_parts(
            w,
            w_in,
            w_fb,
            hyper.omega_out,
            hyper.noise,
        ))
    }

    pub fn n_hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.w_in.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.w_fb.cols()
    }

    /// `tanh(W h + W_in x + W_fb (ω_out y_prev) + ε)`; `noise_rng` adds
    /// `ε ~ N(0, noise)` per unit.
    pub fn step(
        &self,
        h: &[f64],
        x: &[f64],
        y_prev: &[f64],
        noise_rng: Option<&mut RngStream>,
    ) -> Vec<f64> {
        let mut a = vec![0.0; self.n_hidden()];
        self.op.mul_vec_into(h, &mut a);
        self.w_in.mul_vec_acc(x, &mut a);
        if self.omega_out != 0.0 {
            let fb: Vec<f64> = y_prev.iter().map(|v| v * self.omega_out).collect();
            self.w_fb.mul_vec_acc(&fb, &mut a);
        }
        if let Some(rng) = noise_rng {
            if self.noise > 0.0 {
                let sd = self.noise.sqrt();
                a.iter_mut().for_each(|v| *v += sd * rng.normal());
            }
        }
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    /// Runs the reservoir with teacher feedback (`teacher[t-1]` enters step
    /// `t`, zeros before the first sample) and returns the rows
    /// `[x[t], h[t]]` for `t >= washout`.
    pub fn harvest(
        &self,
        xs: &[Vec<f64>],
        teacher: &[Vec<f64>],
        washout: usize,
        mut noise_rng: Option<&mut RngStream>,
    ) -> Result<Matrix> {
        if teacher.len() != xs.len() {
            return Err(Error::dim(format!(
                "{} inputs but {} teacher outputs",
                xs.len(),
                teacher.len()
            )));
        }
        if washout >= xs.len() {
            return Err(Error::invalid(format!(
                "washout {washout} leaves no rows out of {}",
                xs.len()
            )));
        }
        let (ni, nh) = (self.n_inputs(), self.n_hidden());
        let mut s = Matrix::zeros(xs.len() - washout, ni + nh);
        let mut h = vec![0.0; nh];
        let zeros = vec![0.0; self.n_outputs()];
        for (t, x) in xs.iter().enumerate() {
            if x.len() != ni {
                return Err(Error::dim(format!(
                    "input {t} has length {}, expected {ni}",
                    x.len()
                )));
            }
            let y_prev = if t == 0 { &zeros } else { &teacher[t - 1] };
            h = self.step(&h, x, y_prev, noise_rng.as_deref_mut());
            if t >= washout {
                let row = s.row_mut(t - washout);
                row[..ni].copy_from_slice(x);
                row[ni..].copy_from_slice(&h);
            }
        }
        Ok(s)
    }
}

/// A reservoir with its trained readout (`No × (Ni+Nh)`, acting on
/// `[x; h]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnModel {
    pub hyper: EsnHyper,
    pub reservoir: Reservoir,
    pub readout: Matrix,
}

impl EsnModel {
    pub fn output(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let ni = x.len();
        (0..self.readout.rows())
            .map(|k| {
                let r = self.readout.row(k);
                crate::numerics::dot(&r[..ni], x) + crate::numerics::dot(&r[ni..], h)
            })
            .collect()
    }

    /// Noise-free run over `xs[..end]` from a zero state. Step `t` receives
    /// `teacher[t-1]` as feedback while it exists and the model's own
    /// previous output afterwards. Returns every output.
    pub fn run(&self, xs: &[Vec<f64>], teacher: &[Vec<f64>], end: usize) -> Result<Vec<Vec<f64>>> {
        if end > xs.len() {
            return Err(Error::dim(format!("run to {end} with {} inputs", xs.len())));
        }
        let r = &self.reservoir;
        let mut h = vec![0.0; r.n_hidden()];
        let mut prev = vec![0.0; r.n_outputs()];
        let mut out = Vec::with_capacity(end);
        for t in 0..end {
            let fb = if t > 0 && t - 1 < teacher.len() {
                &teacher[t - 1]
            } else {
                &prev
            };
            h = r.step(&h, &xs[t], fb, None);
            prev = self.output(&xs[t], &h);
            out.push(prev.clone());
        }
        Ok(out)
    }

    /// Transformed-scale forecasts for `range`. Labels are fed back only up
    /// to position `range.start - horizon`, the last one observable when the
    /// forecast starts; later steps feed back the model's own outputs.
    pub fn forecast(&self, dataset: &TaskDataset, range: Range<usize>) -> Result<Vec<f64>> {
        let known = (range.start + 1).saturating_sub(dataset.horizon);
        let teacher = dataset.target_rows();
        let out = self.run(&dataset.inputs, &teacher[..known.min(range.end)], range.end)?;
        Ok(out[range.start..].iter().map(|y| y[0]).collect())
    }
}

/// Builds a reservoir from `seed`, harvests states with teacher forcing on
/// the training split (plus validation when `include_valid`), and fits the
/// readout by ridge regression.
pub fn train(
    dataset: &TaskDataset,
    hyper: &EsnHyper,
    seed: u64,
    include_valid: bool,
) -> Result<EsnModel> {
    hyper.validate()?;
    let root = RngStream::new(seed, 0);
    let reservoir = Reservoir::build(hyper, dataset.n_inputs(), 1, &mut root.derive(1))?;
    let end = if include_valid {
        dataset.split.valid.end
    } else {
        dataset.split.train.end
    };
    let teacher = dataset.target_rows();
    let mut noise = root.derive(2);
    let s = reservoir.harvest(
        &dataset.inputs[..end],
        &teacher[..end],
        hyper.washout,
        Some(&mut noise),
    )?;
    let y: Vec<f64> = dataset.targets[hyper.washout..end].to_vec();
    let w = ridge_fit(&s, &y, hyper.l2)?;
    let readout = Matrix::from_vec(1, w.len(), w)?;
    Ok(EsnModel {
        hyper: *hyper,
        reservoir,
        readout,
    })
}
