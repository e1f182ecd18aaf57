//! Central-difference verification of analytic gradients.

use super::network::{loss_and_gradients, Network, ParamSet};
use super::{loss, LossKind, Matrix};
use crate::error::Result;

/// Relative disagreement between an analytic and a numeric derivative.
#[inline]
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Central-difference derivative of `f` with respect to every entry of the
/// parameter set, in [`ParamSet::tensors`] order.
pub fn numeric_gradient<P: ParamSet + Clone>(
    params: &P,
    h: f64,
    mut f: impl FnMut(&P) -> f64,
) -> Vec<Vec<f64>> {
    let mut probe = params.clone();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (t, &len) in shapes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for k in 0..len {
            let orig = probe.tensors()[t][k];
            probe.tensors_mut()[t][k] = orig + h;
            let plus = f(&probe);
            probe.tensors_mut()[t][k] = orig - h;
            let minus = f(&probe);
            probe.tensors_mut()[t][k] = orig;
            g.push((plus - minus) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Worst relative error between two gradients laid out as in [`numeric_gradient`].
pub fn max_relative_error(analytic: &[&[f64]], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.iter().zip(n))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Max over all weights and biases of
/// `|analytic − central difference| / (|analytic| + |fd| + 1e-12)`.
pub fn grad_check(net: &Network, x: &Matrix, target: &Matrix, kind: LossKind, h: f64) -> Result<f64> {
    let (_, grads) = loss_and_gradients(net, x, target, kind)?;
    let numeric = numeric_gradient(net, h, |n| {
        n.forward(x)
            .and_then(|p| loss(&p, target, kind))
            .unwrap_or(f64::NAN)
    });
    Ok(max_relative_error(&grads.tensors(), &numeric))
}
