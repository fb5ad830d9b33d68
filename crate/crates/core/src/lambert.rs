//! Principal branch of the Lambert W function on the nonnegative reals.
//!
//! `W0(x)` is the inverse of `f(w) = w * exp(w)`. The closed-form refresh
//! interval solution only ever evaluates it at nonnegative arguments, where
//! the root is unique and nonnegative, so the negative branch is not
//! implemented.

use crate::error::{Error, Result};

/// Converged evaluation of `W0` together with its convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertResult {
    /// The root `w` with `w * exp(w) = x`.
    pub value: f64,
    /// Halley iterations taken.
    pub iterations: u32,
    /// Defect `|w * exp(w) - x|` at the returned value.
    pub residual: f64,
}

const MAX_ITERATIONS: u32 = 50;

/// Evaluate the principal branch `W0(x)` for `x >= 0`.
///
/// Uses Halley's method started from `ln(1 + x)`, which brackets the root
/// from above for all nonnegative `x` and converges cubically; six
/// iterations cover the whole domain in practice. The returned residual
/// satisfies `|w * exp(w) - x| <= 1e-12 * max(1, x)`.
pub fn lambert_w0(x: f64) -> Result<LambertResult> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "lambert_w0 requires a finite x >= 0, got {x}"
        )));
    }

    let mut w = x.ln_1p();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let ew = w.exp();
        let f = w * ew - x;
        // f' = (1 + w) e^w, f'' = (2 + w) e^w; Halley step
        let fp = (1.0 + w) * ew;
        let step = f / (fp - f * (2.0 + w) / (2.0 * (1.0 + w)));
        w -= step;
        if step.abs() <= 1e-14 * (1.0 + w.abs()) {
            let residual = (w * w.exp() - x).abs();
            return Ok(LambertResult {
                value: w,
                iterations,
                residual,
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "lambert_w0({x}) did not converge within {MAX_ITERATIONS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection oracle for `w * exp(w) = x`, independent of the Halley path.
    fn w0_bisect(x: f64) -> f64 {
        let mut lo = 0.0_f64;
        let mut hi = x.ln_1p().max(1.0);
        while hi * hi.exp() < x {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_maps_to_zero() {
        let r = lambert_w0(0.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn e_maps_to_one() {
        let r = lambert_w0(std::f64::consts::E).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14, "W(e) = {}", r.value);
    }

    #[test]
    fn omega_constant() {
        // w * e^w = 1 has the root 0.5671432904097838... (bisection oracle agrees)
        let r = lambert_w0(1.0).unwrap();
        assert!((r.value - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((r.value - w0_bisect(1.0)).abs() < 1e-13);
    }

    #[test]
    fn rejects_negative_and_non_finite() {
        assert!(lambert_w0(-1e-9).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
        assert!(lambert_w0(f64::INFINITY).is_err());
    }

    #[test]
    fn residual_bound_over_domain() {
        // log-spaced sweep across the argument range the solver produces
        for k in -30..=40 {
            let x = 10f64.powi(k) * 3.7;
            let r = lambert_w0(x).unwrap();
            assert!(
                r.residual <= 1e-12 * x.max(1.0),
                "x = {x:e}: residual {} exceeds bound",
                r.residual
            );
            assert!(r.iterations <= 10, "x = {x:e}: {} iterations", r.iterations);
        }
    }

    #[test]
    fn matches_bisection_oracle() {
        for k in 0..60 {
            let x = 0.003 * 1.6f64.powi(k);
            let w = lambert_w0(x).unwrap().value;
            let oracle = w0_bisect(x);
            assert!(
                (w - oracle).abs() <= 1e-12 * oracle.max(1.0),
                "x = {x}: {w} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn round_trip_recovers_w() {
        for i in 0..200 {
            let w = 50.0 * (i as f64) / 199.0;
            let x = w * w.exp();
            let back = lambert_w0(x).unwrap().value;
            assert!(
                (back - w).abs() <= 1e-12 * w.max(1.0),
                "w = {w}: recovered {back}"
            );
        }
    }
}
