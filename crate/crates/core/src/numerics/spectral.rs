use crate::error::{Error, Result};
use crate::numerics::sparse::Operator;
use crate::numerics::{dot, norm, splitmix64, Matrix};

const MAX_ITERS: usize = 2000;
const WINDOW: usize = 100;
const WINDOW_TOL: f64 = 1e-8;
const ARNOLDI_DIM: usize = 20;

/// Largest eigenvalue magnitude of a square matrix.
///
/// Normalized power iteration. Convergence is judged on the geometric mean of
/// the per-step growth ratios over a sliding window, which stays meaningful
/// when the dominant eigenvalues form a complex pair and the single-step ratio
/// oscillates. The estimate is then refined: first by a two-dimensional
/// Krylov fit `M²u ≈ a·Mu + b·u` (exact for one real eigenvalue or one
/// complex pair), and when that fit is not tight, by the Ritz values of a
/// short Arnoldi projection.
/// A zero (or nilpotent) matrix yields 0.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    if n == 0 || m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let op = Operator::new(m);

    let mut u = start_vector(n);
    let mut w = vec![0.0; n];
    let mut logs: Vec<f64> = Vec::with_capacity(MAX_ITERS);
    let mut prev_mean: Option<f64> = None;

    for it in 0..MAX_ITERS {
        op.apply(&u, &mut w);
        let g = norm(&w);
        if g == 0.0 || !g.is_finite() {
            return Ok(0.0);
        }
        logs.push(g.ln());
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui = wi / g;
        }
        if logs.len() >= WINDOW && (it + 1) % 10 == 0 {
            let mean = (logs[logs.len() - WINDOW..].iter().sum::<f64>() / WINDOW as f64).exp();
            if let Some(p) = prev_mean {
                if ((mean - p) / mean).abs() < WINDOW_TOL {
                    break;
                }
            }
            prev_mean = Some(mean);
            if (it + 1) % WINDOW == 0 {
                if let Some((r, resid)) = krylov_estimate(&op, &u) {
                    if resid < 1e-13 {
                        return Ok(r);
                    }
                }
            }
        }
    }

    let tail = logs.len().min(WINDOW);
    let geo = (logs[logs.len() - tail..].iter().sum::<f64>() / tail as f64).exp();
    Ok(match krylov_estimate(&op, &u) {
        Some((r, resid)) if resid < 1e-13 => r,
        _ => ritz_radius(&op, &u).unwrap_or(geo),
    })
}

/// Largest Ritz value magnitude from an Arnoldi projection started at `u`.
/// After power iteration `u` lies almost entirely in the dominant invariant
/// subspace, so a short projection resolves several near-equal eigenvalues.
fn ritz_radius(op: &Operator<'_>, u: &[f64]) -> Option<f64> {
    let n = u.len();
    let k_max = n.min(ARNOLDI_DIM);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    let u0 = norm(u);
    basis.push(u.iter().map(|x| x / u0).collect());
    let mut h = vec![vec![0.0; k_max]; k_max + 1];
    let mut k = k_max;
    let mut w = vec![0.0; n];
    for j in 0..k_max {
        op.apply(&basis[j], &mut w);
        let scale = norm(&w);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = dot(&w, b);
                h[i][j] += c;
                crate::numerics::axpy(-c, b, &mut w);
            }
        }
        let beta = norm(&w);
        h[j + 1][j] = beta;
        if beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            k = j + 1;
            break;
        }
        if j + 1 < k_max {
            basis.push(w.iter().map(|x| x / beta).collect());
        }
    }
    let hk = nalgebra::DMatrix::from_fn(k, k, |r, c| h[r][c]);
    let r = hk
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    r.is_finite().then_some(r)
}

/// Returns the refined radius and the relative residual of the fit.
fn krylov_estimate(op: &Operator<'_>, u0: &[f64]) -> Option<(f64, f64)> {
    let n = u0.len();
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    op.apply(u0, &mut u1);
    op.apply(&u1, &mut u2);
    let n1 = norm(&u1);
    if n1 == 0.0 {
        return Some((0.0, 0.0));
    }

    // one real dominant eigenvalue
    let uu = dot(u0, u0);
    let mu = dot(u0, &u1) / uu;
    let r1: f64 = u1
        .iter()
        .zip(u0)
        .map(|(a, b)| (a - mu * b).powi(2))
        .sum::<f64>()
        .sqrt();
    if r1 <= 1e-9 * n1 {
        return Some((mu.abs(), r1 / n1));
    }

    // dominant pair: least squares for u2 ≈ a u1 + b u0
    let g11 = dot(&u1, &u1);
    let g10 = dot(&u1, u0);
    let g00 = uu;
    let h1 = dot(&u2, &u1);
    let h0 = dot(&u2, u0);
    let det = g11 * g00 - g10 * g10;
    if det.abs() <= 1e-14 * g11 * g00 {
        return None;
    }
    let a = (h1 * g00 - h0 * g10) / det;
    let b = (g11 * h0 - g10 * h1) / det;
    let n2 = norm(&u2);
    if n2 == 0.0 {
        return Some((0.0, 0.0));
    }
    let resid: f64 = u2
        .iter()
        .zip(u1.iter().zip(u0))
        .map(|(z, (y, x))| (z - a * y - b * x).powi(2))
        .sum::<f64>()
        .sqrt()
        / n2;
    let disc = a * a + 4.0 * b;
    let r = if disc < 0.0 {
        (-b).sqrt()
    } else {
        let s = disc.sqrt();
        ((a + s) / 2.0).abs().max(((a - s) / 2.0).abs())
    };
    Some((r, resid))
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = splitmix64(state);
            // uniform in [0.5, 1.5) keeps every component well away from zero
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// `m · target / ρ(m)`; returns `m` itself when it is already at the target.
pub fn rescale_to_radius(m: &Matrix, target: f64) -> Result<Matrix> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::invalid(format!(
            "target radius must be positive, got {target}"
        )));
    }
    let r = spectral_radius(m)?;
    if r == 0.0 {
        return Err(Error::ZeroRadius);
    }
    // already at target up to estimator round-off: leave untouched so that
    // repeated rescaling is a no-op
    if (r - target).abs() <= 1e-12 * target {
        return Ok(m.clone());
    }
    Ok(m.scaled(target / r))
}
