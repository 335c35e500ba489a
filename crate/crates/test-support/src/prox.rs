//! Numeric constrained-minimization oracle for proximal maps.
//!
//! `l1_ball_prox` solves
//!
//! ```text
//! minimize over u:  lambda·‖u‖₁ + 1/(2γ)·‖u − y‖²   subject to ‖u‖ ≤ radius
//! ```
//!
//! by Douglas–Rachford splitting between `f(u) = lambda·‖u‖₁ + 1/(2γ)‖u − y‖²`
//! and the ball indicator. The prox of `f` is evaluated coordinatewise by
//! 1-D ternary search rather than by any closed-form threshold formula, so the
//! oracle shares no algebra with the implementation it is used to check.

use nalgebra::DVector;

use crate::scalar::argmin_1d;

/// Prox of `t·f` at `z` where `f(u) = lambda‖u‖₁ + 1/(2 gamma)‖u − y‖²`,
/// computed one coordinate at a time by numeric minimization.
fn prox_separable_numeric(
    z: &DVector<f64>,
    y: &DVector<f64>,
    gamma: f64,
    lambda: f64,
    t: f64,
) -> DVector<f64> {
    DVector::from_iterator(
        z.len(),
        z.iter().zip(y.iter()).map(|(&zk, &yk)| {
            let h = |u: f64| {
                lambda * u.abs()
                    + (u - yk) * (u - yk) / (2.0 * gamma)
                    + (u - zk) * (u - zk) / (2.0 * t)
            };
            // The minimizer lies in the convex hull of {0, yk, zk}: outside of
            // it every subgradient term has the same sign.
            let lo = 0.0f64.min(yk).min(zk) - 1.0;
            let hi = 0.0f64.max(yk).max(zk) + 1.0;
            argmin_1d(h, lo, hi)
        }),
    )
}

fn project_ball(x: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = x.norm();
    if norm <= radius {
        x.clone()
    } else {
        x * (radius / norm)
    }
}

/// Reference solution of the l1-regularized ball-constrained prox problem.
pub fn l1_ball_prox(y: &DVector<f64>, gamma: f64, lambda: f64, radius: f64) -> DVector<f64> {
    assert!(gamma > 0.0 && radius > 0.0 && lambda >= 0.0);
    let t = gamma;
    let mut z = y.clone();
    let mut feasible = project_ball(y, radius);
    for iter in 0..20_000 {
        let u = prox_separable_numeric(&z, y, gamma, lambda, t);
        let v = project_ball(&(2.0 * &u - &z), radius);
        z += &v - &u;
        feasible = v;
        let gap = (&feasible - &u).norm();
        if iter > 4 && gap <= 1e-11 {
            break;
        }
    }
    feasible
}

#[cfg(test)]
mod tests {
    use super::l1_ball_prox;
    use nalgebra::DVector;

    #[test]
    fn unconstrained_quadratic_recovers_center() {
        // lambda = 0 and y inside the ball: the minimizer is y itself.
        let y = DVector::from_vec(vec![0.3, -0.2]);
        let u = l1_ball_prox(&y, 2.0, 0.0, 1.0);
        assert!((u - y).norm() < 1e-8);
    }

    #[test]
    fn strong_shrinkage_yields_zero() {
        let y = DVector::from_vec(vec![0.05, -0.03]);
        let u = l1_ball_prox(&y, 1.0, 1.0, 1.0);
        assert!(u.norm() < 1e-8);
    }
}
