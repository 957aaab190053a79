//! Central finite-difference utilities for validating analytic gradients.
//!
//! Checks run the loss twice per coordinate at +/- step and compare the
//! symmetric difference quotient against the analytic value. Losses must be
//! pure functions of the probed tensor.

use crate::tensor::Tensor;

/// Largest relative error between two slices, with an absolute floor so
/// near-zero pairs compare absolutely.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "max_rel_err length mismatch");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central finite-difference gradient of `loss` at `point`.
pub fn numeric_gradient(point: &Tensor, loss: impl Fn(&Tensor) -> f64, step: f64) -> Tensor {
    let mut grad = Tensor::zeros(point.shape());
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - step;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Panics if the analytic gradient disagrees with central finite differences
/// beyond `tol` relative error (1e-8 absolute floor).
pub fn check_gradients(
    point: &Tensor,
    analytic: &Tensor,
    loss: impl Fn(&Tensor) -> f64,
    step: f64,
    tol: f64,
) {
    assert_eq!(point.shape(), analytic.shape(), "gradient shape mismatch");
    let numeric = numeric_gradient(point, loss, step);
    for i in 0..point.len() {
        let a = analytic.data()[i];
        let n = numeric.data()[i];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        assert!(
            rel < tol,
            "gradient mismatch at flat index {}: analytic={:.10e}, numeric={:.10e}, rel={:.3e}",
            i,
            a,
            n,
            rel
        );
    }
}
