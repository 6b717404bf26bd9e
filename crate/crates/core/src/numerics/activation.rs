#[inline]
pub fn sigmoid(x: f64) -> f64 {
    // split on sign so exp never overflows
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic sigmoid `1 / (1 + e^-x)`.
pub fn logistic(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid(x)).collect()
}

/// Elementwise hyperbolic tangent.
pub fn tanh_act(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.tanh()).collect()
}
