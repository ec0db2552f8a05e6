//! Finite-difference oracle for gradient checks. Uses only forward
//! evaluation, so it stays independent of the backward rules it checks.

use super::tensor::Tensor;

/// Magnitude below which gradients are compared absolutely rather than
/// relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Central differences `(f(θ+ε) − f(θ−ε)) / 2ε` for every scalar in
/// `params`, one output buffer per input tensor.
pub fn central_difference<F>(params: &[Tensor], eps: f64, f: F) -> Vec<Vec<f64>>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = vec![0.0; params[p].len()];
        for (i, slot) in g.iter_mut().enumerate() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let plus = f(&work);
            work[p].data_mut()[i] = orig - eps;
            let minus = f(&work);
            work[p].data_mut()[i] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    out
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, RELATIVE_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}
