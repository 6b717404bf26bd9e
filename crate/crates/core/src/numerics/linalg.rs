use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let mut l = a.as_slice().to_vec();
        for j in 0..n {
            let (head, tail) = l.split_at_mut(j * n);
            let row_j = &mut tail[..n];
            // finish row j against the already-factored rows above it
            for k in 0..j {
                let row_k = &head[k * n..k * n + n];
                let s = row_j[k] - crate::numerics::dot(&row_j[..k], &row_k[..k]);
                row_j[k] = s / row_k[k];
            }
            let d = row_j[j] - crate::numerics::dot(&row_j[..j], &row_j[..j]);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular);
            }
            row_j[j] = d.sqrt();
            for v in &mut row_j[j + 1..] {
                *v = 0.0;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Smallest over largest diagonal entry of the factor, squared: a cheap
    /// reciprocal condition estimate.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|i| self.l[i * self.n + i]).collect();
        let hi = d.iter().cloned().fold(0.0, f64::max);
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi == 0.0 {
            0.0
        } else {
            (lo / hi).powi(2)
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length");
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            y[i] = (y[i] - crate::numerics::dot(row, &y[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::dim(format!(
            "rhs of length {} for {}x{} system",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    Ok(Cholesky::factor(a)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = Matrix::from_rows(&[
            vec![4.0, 12.0, -16.0],
            vec![12.0, 37.0, -43.0],
            vec![-16.0, -43.0, 98.0],
        ])
        .unwrap();
        let x = vec![1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let got = solve_spd(&a, &b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::factor(&a), Err(Error::Singular)));
        let z = Matrix::zeros(2, 2);
        assert!(solve_spd(&z, &[1.0, 1.0]).is_err());
    }
}
