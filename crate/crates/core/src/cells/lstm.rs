use serde::{Deserialize, Serialize};

use super::{
    check_len, impl_parameters, init_matrix, CellDims, CellKind, DropoutMasks, RecurrentCell,
    SequenceCache,
};
use crate::error::Result;
use crate::numerics::{sigmoid, Matrix, RngStream};

/// LSTM block parameters plus a linear readout.
///
/// Gates read the current input and the previous *block output* `y[t-1]`
/// (not the cell state). `w_*` are `Nh×Ni`, `r_*` are `Nh×Nh`.
/// State layout is `[h; y]` where `h` is the cell state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_f: Matrix,
    pub w_h: Matrix,
    pub w_u: Matrix,
    pub w_o: Matrix,
    pub r_f: Matrix,
    pub r_h: Matrix,
    pub r_u: Matrix,
    pub r_o: Matrix,
    pub b_f: Vec<f64>,
    pub b_h: Vec<f64>,
    pub b_u: Vec<f64>,
    pub b_o: Vec<f64>,
    /// Readout `No×Nh` and its bias.
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl_parameters!(LstmParams;
    matrices: [w_f, w_h, w_u, w_o, r_f, r_h, r_u, r_o, w_out];
    vectors: [b_f, b_h, b_u, b_o, b_out]);

impl LstmParams {
    pub fn init(dims: CellDims, rng: &mut RngStream) -> Result<Self> {
        dims.validate()?;
        let (ni, nh, no) = (dims.n_inputs, dims.n_hidden, dims.n_outputs);
        Ok(LstmParams {
            w_f: init_matrix(nh, ni, nh, rng),
            w_h: init_matrix(nh, ni, nh, rng),
            w_u: init_matrix(nh, ni, nh, rng),
            w_o: init_matrix(nh, ni, nh, rng),
            r_f: init_matrix(nh, nh, nh, rng),
            r_h: init_matrix(nh, nh, nh, rng),
            r_u: init_matrix(nh, nh, nh, rng),
            r_o: init_matrix(nh, nh, nh, rng),
            b_f: vec![0.0; nh],
            b_h: vec![0.0; nh],
            b_u: vec![0.0; nh],
            b_o: vec![0.0; nh],
            w_out: init_matrix(no, nh, nh, rng),
            b_out: vec![0.0; no],
        })
    }

    pub fn zeros(dims: CellDims) -> Self {
        let (ni, nh, no) = (dims.n_inputs, dims.n_hidden, dims.n_outputs);
        LstmParams {
            w_f: Matrix::zeros(nh, ni),
            w_h: Matrix::zeros(nh, ni),
            w_u: Matrix::zeros(nh, ni),
            w_o: Matrix::zeros(nh, ni),
            r_f: Matrix::zeros(nh, nh),
            r_h: Matrix::zeros(nh, nh),
            r_u: Matrix::zeros(nh, nh),
            r_o: Matrix::zeros(nh, nh),
            b_f: vec![0.0; nh],
            b_h: vec![0.0; nh],
            b_u: vec![0.0; nh],
            b_o: vec![0.0; nh],
            w_out: Matrix::zeros(no, nh),
            b_out: vec![0.0; no],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    x_in: Vec<f64>,
    y_in: Vec<f64>,
    f: Vec<f64>,
    cand: Vec<f64>,
    u: Vec<f64>,
    o: Vec<f64>,
    tanh_h: Vec<f64>,
    y: Vec<f64>,
}

fn gate(
    w: &Matrix,
    r: &Matrix,
    b: &[f64],
    x: &[f64],
    y: &[f64],
    act: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut z = b.to_vec();
    w.mul_vec_acc(x, &mut z);
    r.mul_vec_acc(y, &mut z);
    z.into_iter().map(act).collect()
}

impl RecurrentCell for LstmParams {
    type Step = LstmStep;

    fn kind(&self) -> CellKind {
        CellKind::Lstm
    }

    fn n_inputs(&self) -> usize {
        self.w_f.cols()
    }

    fn n_hidden(&self) -> usize {
        self.w_f.rows()
    }

    fn n_outputs(&self) -> usize {
        self.w_out.rows()
    }

    fn state_len(&self) -> usize {
        2 * self.n_hidden()
    }

    fn step(
        &self,
        state: &[f64],
        x: &[f64],
        masks: &DropoutMasks,
    ) -> (Vec<f64>, Vec<f64>, LstmStep) {
        let nh = self.n_hidden();
        let (h_prev, y_prev) = state.split_at(nh);
        let x_in: Vec<f64> = x.iter().zip(&masks.input).map(|(a, m)| a * m).collect();
        let y_in: Vec<f64> = y_prev
            .iter()
            .zip(&masks.recurrent)
            .map(|(a, m)| a * m)
            .collect();
        let f = gate(&self.w_f, &self.r_f, &self.b_f, &x_in, &y_in, sigmoid);
        let cand = gate(&self.w_h, &self.r_h, &self.b_h, &x_in, &y_in, f64::tanh);
        let u = gate(&self.w_u, &self.r_u, &self.b_u, &x_in, &y_in, sigmoid);
        let o = gate(&self.w_o, &self.r_o, &self.b_o, &x_in, &y_in, sigmoid);
        let mut next = Vec::with_capacity(2 * nh);
        for i in 0..nh {
            next.push(u[i] * cand[i] + f[i] * h_prev[i]);
        }
        let tanh_h: Vec<f64> = next.iter().map(|v| v.tanh()).collect();
        let y: Vec<f64> = o.iter().zip(&tanh_h).map(|(o, t)| o * t).collect();
        next.extend_from_slice(&y);
        let mut out = self.b_out.clone();
        self.w_out.mul_vec_acc(&y, &mut out);
        (
            next,
            out,
            LstmStep {
                x_in,
                y_in,
                f,
                cand,
                u,
                o,
                tanh_h,
                y,
            },
        )
    }

    fn step_backward(
        &self,
        prev: &[f64],
        s: &LstmStep,
        masks: &DropoutMasks,
        d_out: Option<&[f64]>,
        d_next: &[f64],
        g: &mut Self,
    ) -> Vec<f64> {
        let nh = self.n_hidden();
        let h_prev = &prev[..nh];
        let (dh_next, dy_next) = d_next.split_at(nh);
        let mut dy = dy_next.to_vec();
        if let Some(d) = d_out {
            g.w_out.add_outer(d, &s.y);
            for (gb, v) in g.b_out.iter_mut().zip(d) {
                *gb += v;
            }
            self.w_out.tr_mul_vec_acc(d, &mut dy);
        }
        let mut dz_f = vec![0.0; nh];
        let mut dz_h = vec![0.0; nh];
        let mut dz_u = vec![0.0; nh];
        let mut dz_o = vec![0.0; nh];
        let mut dh_prev = vec![0.0; nh];
        for i in 0..nh {
            let (f, c, u, o, t) = (s.f[i], s.cand[i], s.u[i], s.o[i], s.tanh_h[i]);
            let d_o = dy[i] * t;
            let dh = dy[i] * o * (1.0 - t * t) + dh_next[i];
            dz_f[i] = dh * h_prev[i] * f * (1.0 - f);
            dz_u[i] = dh * c * u * (1.0 - u);
            dz_h[i] = dh * u * (1.0 - c * c);
            dz_o[i] = d_o * o * (1.0 - o);
            dh_prev[i] = dh * f;
        }
        let mut dy_in = vec![0.0; nh];
        for (dz, r, gw, gr, gb) in [
            (&dz_f, &self.r_f, &mut g.w_f, &mut g.r_f, &mut g.b_f),
            (&dz_h, &self.r_h, &mut g.w_h, &mut g.r_h, &mut g.b_h),
            (&dz_u, &self.r_u, &mut g.w_u, &mut g.r_u, &mut g.b_u),
            (&dz_o, &self.r_o, &mut g.w_o, &mut g.r_o, &mut g.b_o),
        ] {
            gw.add_outer(dz, &s.x_in);
            gr.add_outer(dz, &s.y_in);
            for (b, d) in gb.iter_mut().zip(dz.iter()) {
                *b += d;
            }
            r.tr_mul_vec_acc(dz, &mut dy_in);
        }
        for (d, m) in dy_in.iter_mut().zip(&masks.recurrent) {
            *d *= m;
        }
        dh_prev.extend_from_slice(&dy_in);
        dh_prev
    }

    fn memory_sensitivity(&self, s: &LstmStep, d_out: Option<&[f64]>, d_next: &[f64]) -> Vec<f64> {
        // the cell state also reaches the loss through y = o ⊙ tanh(h)
        let nh = self.n_hidden();
        let (dh_next, dy_next) = d_next.split_at(nh);
        let mut dy = dy_next.to_vec();
        if let Some(d) = d_out {
            self.w_out.tr_mul_vec_acc(d, &mut dy);
        }
        (0..nh)
            .map(|i| dh_next[i] + dy[i] * s.o[i] * (1.0 - s.tanh_h[i] * s.tanh_h[i]))
            .collect()
    }
}

/// Runs an LSTM over `xs`; `h0` (cell state) and `y0` (block output) default
/// to zeros. Returns the readout outputs.
pub fn lstm_forward(
    p: &LstmParams,
    xs: &[Vec<f64>],
    h0: Option<&[f64]>,
    y0: Option<&[f64]>,
) -> Result<(Vec<Vec<f64>>, SequenceCache<LstmStep>)> {
    let nh = p.n_hidden();
    let mut state = h0.map_or_else(|| vec![0.0; nh], <[f64]>::to_vec);
    check_len("h0", state.len(), nh)?;
    let y0 = y0.map_or_else(|| vec![0.0; nh], <[f64]>::to_vec);
    check_len("y0", y0.len(), nh)?;
    state.extend(y0);
    let masks = DropoutMasks::ones(p.n_inputs(), nh);
    let cache = p.forward(xs, &state, &masks)?;
    Ok((cache.outputs.clone(), cache))
}
