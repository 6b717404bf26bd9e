use serde::{Deserialize, Serialize};

use super::{
    check_len, impl_parameters, init_matrix, CellDims, CellKind, DropoutMasks, RecurrentCell,
    SequenceCache,
};
use crate::error::Result;
use crate::numerics::{Matrix, RngStream};

/// Elman network parameters.
///
/// `h[t] = tanh(Wihᵀ(x[t] + bi) + Whhᵀ(h[t-1] + bh))`, `y[t] = Whoᵀ(h[t] + bo)`.
/// Matrices are stored input-major (`wih` is `Ni×Nh`, `who` is `Nh×No`), so
/// they act through their transpose. The input bias has the input's length
/// and the output bias the state's, since each is added before the product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErnnParams {
    pub wih: Matrix,
    pub whh: Matrix,
    pub who: Matrix,
    pub bi: Vec<f64>,
    pub bh: Vec<f64>,
    pub bo: Vec<f64>,
}

impl_parameters!(ErnnParams; matrices: [wih, whh, who]; vectors: [bi, bh, bo]);

impl ErnnParams {
    pub fn init(dims: CellDims, rng: &mut RngStream) -> Result<Self> {
        dims.validate()?;
        let CellDims {
            n_inputs: ni,
            n_hidden: nh,
            n_outputs: no,
        } = dims;
        Ok(ErnnParams {
            wih: init_matrix(ni, nh, nh, rng),
            whh: init_matrix(nh, nh, nh, rng),
            who: init_matrix(nh, no, nh, rng),
            bi: vec![0.0; ni],
            bh: vec![0.0; nh],
            bo: vec![0.0; nh],
        })
    }

    pub fn zeros(dims: CellDims) -> Self {
        let CellDims {
            n_inputs: ni,
            n_hidden: nh,
            n_outputs: no,
        } = dims;
        ErnnParams {
            wih: Matrix::zeros(ni, nh),
            whh: Matrix::zeros(nh, nh),
            who: Matrix::zeros(nh, no),
            bi: vec![0.0; ni],
            bh: vec![0.0; nh],
            bo: vec![0.0; nh],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ErnnStep {
    x_in: Vec<f64>,
    h_in: Vec<f64>,
    h: Vec<f64>,
    h_out: Vec<f64>,
}

impl RecurrentCell for ErnnParams {
    type Step = ErnnStep;

    fn kind(&self) -> CellKind {
        CellKind::Ernn
    }

    fn n_inputs(&self) -> usize {
        self.wih.rows()
    }

    fn n_hidden(&self) -> usize {
        self.whh.rows()
    }

    fn n_outputs(&self) -> usize {
        self.who.cols()
    }

    fn step(
        &self,
        state: &[f64],
        x: &[f64],
        masks: &DropoutMasks,
    ) -> (Vec<f64>, Vec<f64>, ErnnStep) {
        let x_in: Vec<f64> = x
            .iter()
            .zip(&masks.input)
            .zip(&self.bi)
            .map(|((x, m), b)| x * m + b)
            .collect();
        let h_in: Vec<f64> = state
            .iter()
            .zip(&masks.recurrent)
            .zip(&self.bh)
            .map(|((h, m), b)| h * m + b)
            .collect();
        let mut a = self.wih.tr_mul_vec(&x_in);
        self.whh.tr_mul_vec_acc(&h_in, &mut a);
        let h: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
        let h_out: Vec<f64> = h.iter().zip(&self.bo).map(|(h, b)| h + b).collect();
        let y = self.who.tr_mul_vec(&h_out);
        (
            h.clone(),
            y,
            ErnnStep {
                x_in,
                h_in,
                h,
                h_out,
            },
        )
    }

    fn step_backward(
        &self,
        _prev: &[f64],
        s: &ErnnStep,
        masks: &DropoutMasks,
        d_out: Option<&[f64]>,
        d_next: &[f64],
        g: &mut Self,
    ) -> Vec<f64> {
        let mut dh = d_next.to_vec();
        if let Some(dy) = d_out {
            g.who.add_outer(&s.h_out, dy);
            let back = self.who.mul_vec(dy);
            for ((dhi, gb), bi) in dh.iter_mut().zip(g.bo.iter_mut()).zip(&back) {
                *dhi += bi;
                *gb += bi;
            }
        }
        let da: Vec<f64> = dh
            .iter()
            .zip(&s.h)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        g.wih.add_outer(&s.x_in, &da);
        g.whh.add_outer(&s.h_in, &da);
        self.wih.mul_vec_acc(&da, &mut g.bi);
        let d_hin = self.whh.mul_vec(&da);
        for (gb, d) in g.bh.iter_mut().zip(&d_hin) {
            *gb += d;
        }
        d_hin
            .iter()
            .zip(&masks.recurrent)
            .map(|(d, m)| d * m)
            .collect()
    }

    fn memory_sensitivity(&self, _s: &ErnnStep, d_out: Option<&[f64]>, d_next: &[f64]) -> Vec<f64> {
        let mut dh = d_next.to_vec();
        if let Some(dy) = d_out {
            self.who.mul_vec_acc(dy, &mut dh);
        }
        dh
    }
}

/// Runs an Elman network over `xs`; `h0` defaults to zeros.
pub fn ernn_forward(
    p: &ErnnParams,
    xs: &[Vec<f64>],
    h0: Option<&[f64]>,
) -> Result<(Vec<Vec<f64>>, SequenceCache<ErnnStep>)> {
    let h0 = h0.map_or_else(|| p.zero_state(), <[f64]>::to_vec);
    check_len("h0", h0.len(), p.n_hidden())?;
    let masks = DropoutMasks::ones(p.n_inputs(), p.n_hidden());
    let cache = p.forward(xs, &h0, &masks)?;
    Ok((cache.outputs.clone(), cache))
}
