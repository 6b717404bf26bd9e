use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector; layer `l` stores its weights
/// (`out×in`, row-major) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations of one forward pass, input first.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

impl Mlp {
    /// `n_layers` hidden layers of width `n_hidden`. Weights are drawn from
    /// `U[-1,1]/√fan_in`, biases start at zero.
    pub fn init(
        n_in: usize,
        n_hidden: usize,
        n_layers: usize,
        n_out: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if n_in == 0 || n_hidden == 0 || n_layers == 0 || n_out == 0 {
            return Err(Error::invalid(format!(
                "MLP sizes must be positive: in {n_in}, hidden {n_hidden}x{n_layers}, out {n_out}"
            )));
        }
        let mut sizes = vec![n_in];
        sizes.extend(std::iter::repeat_n(n_hidden, n_layers));
        sizes.push(n_out);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let s = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.uniform(-s, s)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Mlp { sizes, params })
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("at least input and output layers")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::dim(format!(
                "MLP input of length {}, expected {}",
                x.len(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .trace_with(&self.params, x)?
            .acts
            .pop()
            .expect("output"))
    }

    pub fn trace(&self, x: &[f64]) -> Result<MlpTrace> {
        self.trace_with(&self.params, x)
    }

    /// Forward pass with an alternative parameter vector of the same shape.
    pub fn trace_with(&self, params: &[f64], x: &[f64]) -> Result<MlpTrace> {
        self.check_input(x)?;
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for (l, (off, fin, fout)) in self.layers().enumerate() {
            let a = &acts[l];
            let w = &params[off..off + fin * fout];
            let b = &params[off + fin * fout..off + fin * fout + fout];
            let mut z: Vec<f64> = (0..fout)
                .map(|r| {
                    b[r] + w[r * fin..(r + 1) * fin]
                        .iter()
                        .zip(a)
                        .map(|(p, q)| p * q)
                        .sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(MlpTrace { acts })
    }

    /// Writes `∂output[k]/∂params` into `row` (overwritten).
    pub fn output_gradient(&self, trace: &MlpTrace, k: usize, row: &mut [f64]) {
        self.output_gradient_with(&self.params, trace, k, row);
    }

    pub fn output_gradient_with(
        &self,
        params: &[f64],
        trace: &MlpTrace,
        k: usize,
        row: &mut [f64],
    ) {
        let layers: Vec<_> = self.layers().collect();
        let mut delta = vec![0.0; self.n_outputs()];
        delta[k] = 1.0;
        for (l, &(off, fin, fout)) in layers.iter().enumerate().rev() {
            let a = &trace.acts[l];
            for r in 0..fout {
                let d = delta[r];
                let wrow = &mut row[off + r * fin..off + (r + 1) * fin];
                for (g, x) in wrow.iter_mut().zip(a) {
                    *g = d * x;
                }
                row[off + fin * fout + r] = d;
            }
            if l > 0 {
                let w = &params[off..off + fin * fout];
                delta = (0..fin)
                    .map(|c| {
                        let s: f64 = (0..fout).map(|r| w[r * fin + c] * delta[r]).sum();
                        s * (1.0 - a[c] * a[c])
                    })
                    .collect();
            }
        }
    }
}
