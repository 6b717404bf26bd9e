use serde::{Deserialize, Serialize};

use super::{
    check_len, impl_parameters, init_matrix, CellDims, CellKind, DropoutMasks, RecurrentCell,
    SequenceCache,
};
use crate::error::Result;
use crate::numerics::{sigmoid, Matrix, RngStream};

/// GRU parameters plus a linear readout.
///
/// Naming note: here `w_*` (`Nh×Nh`) act on the *state* and `r_*` (`Nh×Ni`)
/// act on the *input*, the reverse of the usual convention.
///
/// ```text
/// r  = σ(w_r h[t-1] + r_r x + b_r)
/// h' = h[t-1] ⊙ r
/// z  = tanh(w_z h' + r_z x + b_z)
/// u  = σ(w_u h[t-1] + r_u x + b_u)
/// h  = (1-u) ⊙ h[t-1] + u ⊙ z
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_r: Matrix,
    pub w_z: Matrix,
    pub w_u: Matrix,
    pub r_r: Matrix,
    pub r_z: Matrix,
    pub r_u: Matrix,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_u: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl_parameters!(GruParams;
    matrices: [w_r, w_z, w_u, r_r, r_z, r_u, w_out];
    vectors: [b_r, b_z, b_u, b_out]);

impl GruParams {
    pub fn init(dims: CellDims, rng: &mut RngStream) -> Result<Self> {
        dims.validate()?;
        let (ni, nh, no) = (dims.n_inputs, dims.n_hidden, dims.n_outputs);
        Ok(GruParams {
            w_r: init_matrix(nh, nh, nh, rng),
            w_z: init_matrix(nh, nh, nh, rng),
            w_u: init_matrix(nh, nh, nh, rng),
            r_r: init_matrix(nh, ni, nh, rng),
            r_z: init_matrix(nh, ni, nh, rng),
            r_u: init_matrix(nh, ni, nh, rng),
            b_r: vec![0.0; nh],
            b_z: vec![0.0; nh],
            b_u: vec![0.0; nh],
            w_out: init_matrix(no, nh, nh, rng),
            b_out: vec![0.0; no],
        })
    }

    pub fn zeros(dims: CellDims) -> Self {
        let (ni, nh, no) = (dims.n_inputs, dims.n_hidden, dims.n_outputs);
        GruParams {
            w_r: Matrix::zeros(nh, nh),
            w_z: Matrix::zeros(nh, nh),
            w_u: Matrix::zeros(nh, nh),
            r_r: Matrix::zeros(nh, ni),
            r_z: Matrix::zeros(nh, ni),
            r_u: Matrix::zeros(nh, ni),
            b_r: vec![0.0; nh],
            b_z: vec![0.0; nh],
            b_u: vec![0.0; nh],
            w_out: Matrix::zeros(no, nh),
            b_out: vec![0.0; no],
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruStep {
    x_in: Vec<f64>,
    h_in: Vec<f64>,
    r: Vec<f64>,
    h_reset: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    h: Vec<f64>,
}

impl RecurrentCell for GruParams {
    type Step = GruStep;

    fn kind(&self) -> CellKind {
        CellKind::Gru
    }

    fn n_inputs(&self) -> usize {
        self.r_r.cols()
    }

    fn n_hidden(&self) -> usize {
        self.w_r.rows()
    }

    fn n_outputs(&self) -> usize {
        self.w_out.rows()
    }

    fn step(
        &self,
        state: &[f64],
        x: &[f64],
        masks: &DropoutMasks,
    ) -> (Vec<f64>, Vec<f64>, GruStep) {
        let x_in: Vec<f64> = x.iter().zip(&masks.input).map(|(a, m)| a * m).collect();
        // recurrent dropout hits the gate inputs only, never the carry path
        let h_in: Vec<f64> = state
            .iter()
            .zip(&masks.recurrent)
            .map(|(a, m)| a * m)
            .collect();

        let mut r = self.b_r.clone();
        self.w_r.mul_vec_acc(&h_in, &mut r);
        self.r_r.mul_vec_acc(&x_in, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let h_reset: Vec<f64> = h_in.iter().zip(&r).map(|(h, r)| h * r).collect();

        let mut z = self.b_z.clone();
        self.w_z.mul_vec_acc(&h_reset, &mut z);
        self.r_z.mul_vec_acc(&x_in, &mut z);
        z.iter_mut().for_each(|v| *v = v.tanh());

        let mut u = self.b_u.clone();
        self.w_u.mul_vec_acc(&h_in, &mut u);
        self.r_u.mul_vec_acc(&x_in, &mut u);
        u.iter_mut().for_each(|v| *v = sigmoid(*v));

        let h: Vec<f64> = (0..state.len())
            .map(|i| (1.0 - u[i]) * state[i] + u[i] * z[i])
            .collect();
        let mut out = self.b_out.clone();
        self.w_out.mul_vec_acc(&h, &mut out);
        (
            h.clone(),
            out,
            GruStep {
                x_in,
                h_in,
                r,
                h_reset,
                z,
                u,
                h,
            },
        )
    }

    fn step_backward(
        &self,
        prev: &[f64],
        s: &GruStep,
        masks: &DropoutMasks,
        d_out: Option<&[f64]>,
        d_next: &[f64],
        g: &mut Self,
    ) -> Vec<f64> {
        let nh = self.n_hidden();
        let mut dh = d_next.to_vec();
        if let Some(d) = d_out {
            g.w_out.add_outer(d, &s.h);
            for (gb, v) in g.b_out.iter_mut().zip(d) {
                *gb += v;
            }
            self.w_out.tr_mul_vec_acc(d, &mut dh);
        }
        let mut d_prev = vec![0.0; nh];
        let mut dz_z = vec![0.0; nh];
        let mut dz_u = vec![0.0; nh];
        for i in 0..nh {
            let (u, z) = (s.u[i], s.z[i]);
            d_prev[i] = dh[i] * (1.0 - u);
            dz_u[i] = dh[i] * (z - prev[i]) * u * (1.0 - u);
            dz_z[i] = dh[i] * u * (1.0 - z * z);
        }

        g.w_z.add_outer(&dz_z, &s.h_reset);
        g.r_z.add_outer(&dz_z, &s.x_in);
        add(&mut g.b_z, &dz_z);
        let d_reset = self.w_z.tr_mul_vec(&dz_z);

        let mut d_hin = vec![0.0; nh];
        let mut dz_r = vec![0.0; nh];
        for i in 0..nh {
            let r = s.r[i];
            d_hin[i] = d_reset[i] * r;
            dz_r[i] = d_reset[i] * s.h_in[i] * r * (1.0 - r);
        }

        g.w_u.add_outer(&dz_u, &s.h_in);
        g.r_u.add_outer(&dz_u, &s.x_in);
        add(&mut g.b_u, &dz_u);
        self.w_u.tr_mul_vec_acc(&dz_u, &mut d_hin);

        g.w_r.add_outer(&dz_r, &s.h_in);
        g.r_r.add_outer(&dz_r, &s.x_in);
        add(&mut g.b_r, &dz_r);
        self.w_r.tr_mul_vec_acc(&dz_r, &mut d_hin);

        for i in 0..nh {
            d_prev[i] += d_hin[i] * masks.recurrent[i];
        }
        d_prev
    }

    fn memory_sensitivity(&self, _s: &GruStep, d_out: Option<&[f64]>, d_next: &[f64]) -> Vec<f64> {
        let mut dh = d_next.to_vec();
        if let Some(d) = d_out {
            self.w_out.tr_mul_vec_acc(d, &mut dh);
        }
        dh
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Runs a GRU over `xs`; `h0` defaults to zeros. Returns the state sequence,
/// which is the cell's exposed output; readout values are in the cache.
pub fn gru_forward(
    p: &GruParams,
    xs: &[Vec<f64>],
    h0: Option<&[f64]>,
) -> Result<(Vec<Vec<f64>>, SequenceCache<GruStep>)> {
    let h0 = h0.map_or_else(|| p.zero_state(), <[f64]>::to_vec);
    check_len("h0", h0.len(), p.n_hidden())?;
    let masks = DropoutMasks::ones(p.n_inputs(), p.n_hidden());
    let cache = p.forward(xs, &h0, &masks)?;
    Ok((cache.states[1..].to_vec(), cache))
}
