//! One-dimensional minimization by interval shrinking.

/// Minimizes a convex scalar function over `[lo, hi]` by ternary search.
///
/// The bracket shrinks by a factor 2/3 per iteration; 100 iterations bring
/// any practical bracket below 1e-13 of its original width, far tighter than
/// the tolerances the oracles are used at.
pub fn argmin_1d<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    assert!(lo <= hi, "argmin_1d: empty bracket [{lo}, {hi}]");
    for _ in 0..100 {
        let third = (hi - lo) / 3.0;
        let a = lo + third;
        let b = hi - third;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}
