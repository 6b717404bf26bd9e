use crate::numerics::{dot, Matrix};

/// Compressed sparse rows, used internally to speed up products with
/// mostly-zero reservoir matrices. Values are taken from a dense `Matrix`.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub(crate) fn from_dense(m: &Matrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(values.len());
        }
        SparseRows {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub(crate) fn density(&self) -> f64 {
        if self.rows * self.cols == 0 {
            return 0.0;
        }
        self.values.len() as f64 / (self.rows * self.cols) as f64
    }

    /// `out = M v`.
    pub(crate) fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.indptr[r], self.indptr[r + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * v[self.indices[k]];
            }
            *o = s;
        }
    }
}

/// Either representation, picked by density.
pub(crate) enum Operator<'a> {
    Dense(&'a Matrix),
    Sparse(SparseRows),
}

impl<'a> Operator<'a> {
    pub(crate) fn new(m: &'a Matrix) -> Self {
        let sp = SparseRows::from_dense(m);
        if sp.density() < 0.5 {
            Operator::Sparse(sp)
        } else {
            Operator::Dense(m)
        }
    }

    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Operator::Dense(m) => {
                for (o, r) in out.iter_mut().zip(0..m.rows()) {
                    *o = dot(m.row(r), v);
                }
            }
            Operator::Sparse(s) => s.mul_vec_into(v, out),
        }
    }
}
