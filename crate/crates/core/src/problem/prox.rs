//! Closed-form proximal operators for the regularizers shipped with the
//! library.

use nalgebra::DVector;

/// Componentwise shrinkage `sign(x_k)·max(|x_k| − tau, 0)`, the prox of
/// `tau·‖·‖₁`.
pub fn soft_threshold(x: &DVector<f64>, tau: f64) -> DVector<f64> {
    assert!(tau >= 0.0, "soft_threshold needs tau >= 0, got {tau}");
    x.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Euclidean projection onto the ball `‖x‖ ≤ radius`.
pub fn project_l2_ball(x: &DVector<f64>, radius: f64) -> DVector<f64> {
    assert!(radius > 0.0, "project_l2_ball needs radius > 0, got {radius}");
    let norm = x.norm();
    if norm <= radius {
        x.clone()
    } else {
        x * (radius / norm)
    }
}

/// Prox of `gamma·(lambda‖·‖₁ + indicator(‖·‖ ≤ radius))` at `y`:
/// soft-threshold by `gamma·lambda`, then project radially.
///
/// The composition is exact: the ball multiplier in the KKT system of the
/// constrained prox problem only rescales the thresholded point, and radial
/// scaling commutes with the threshold's sign pattern. The test suite pins
/// this against an independent numeric constrained minimizer.
pub fn prox_l1_ball(y: &DVector<f64>, gamma: f64, lambda: f64, radius: f64) -> DVector<f64> {
    assert!(gamma > 0.0, "prox_l1_ball needs gamma > 0, got {gamma}");
    assert!(lambda >= 0.0, "prox_l1_ball needs lambda >= 0, got {lambda}");
    project_l2_ball(&soft_threshold(y, gamma * lambda), radius)
}
