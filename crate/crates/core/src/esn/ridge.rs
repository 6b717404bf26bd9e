use crate::error::{Error, Result};
use crate::numerics::{Cholesky, Matrix};

/// `(SᵀS + λI)⁻¹ Sᵀ y`
pub fn ridge_fit_primal(s: &Matrix, y: &[f64], l2: f64) -> Result<Vec<f64>> {
    check(s, y, l2)?;
    let mut a = s.gram();
    a.add_diagonal(l2);
    Ok(factor(&a, l2)?.solve(&s.tr_mul_vec(y)))
}

/// `Sᵀ (SSᵀ + λI)⁻¹ y`
pub fn ridge_fit_dual(s: &Matrix, y: &[f64], l2: f64) -> Result<Vec<f64>> {
    check(s, y, l2)?;
    let mut a = s.outer_gram();
    a.add_diagonal(l2);
    let alpha = factor(&a, l2)?.solve(y);
    Ok(s.tr_mul_vec(&alpha))
}

/// Picks the dual form when `S` has more columns than rows.
pub fn ridge_fit(s: &Matrix, y: &[f64], l2: f64) -> Result<Vec<f64>> {
    if s.cols() > s.rows() {
        ridge_fit_dual(s, y, l2)
    } else {
        ridge_fit_primal(s, y, l2)
    }
}

/// Without regularization a rank-deficient state matrix can survive the
/// factorization through rounding, so tiny pivots are rejected as well.
fn factor(a: &Matrix, l2: f64) -> Result<Cholesky> {
    let c = Cholesky::factor(a)?;
    if l2 == 0.0 && c.pivot_ratio() < 1e-13 {
        return Err(Error::Singular);
    }
    Ok(c)
}

fn check(s: &Matrix, y: &[f64], l2: f64) -> Result<()> {
    if s.rows() != y.len() {
        return Err(Error::dim(format!(
            "{} state rows but {} targets",
            s.rows(),
            y.len()
        )));
    }
    if !(l2 >= 0.0) {
        return Err(Error::invalid(format!(
            "ridge coefficient must be nonnegative, got {l2}"
        )));
    }
    Ok(())
}
