//! Finite-difference derivative checks.

use nalgebra::DVector;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference_gradient<F: Fn(&DVector<f64>) -> f64>(
    f: F,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let mut grad = DVector::zeros(x.len());
    for k in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        grad[k] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    grad
}
