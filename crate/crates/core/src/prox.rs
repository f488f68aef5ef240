//! Scalar kernels for the logistic potential `rho(t) = log(1 + e^t)`.
//!
//! Everything downstream (quadrature integrands, AMP, the Newton fitter)
//! goes through these functions, so they are written to be overflow-safe
//! for arguments of any magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arguments beyond this magnitude take the asymptotic branch.
const OVERFLOW_GUARD: f64 = 30.0;
const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITER: usize = 200;

/// `rho(t) = log(1 + e^t)`.
#[inline]
pub fn rho(t: f64) -> f64 {
    if t > OVERFLOW_GUARD {
        t + (-t).exp().ln_1p()
    } else if t < -OVERFLOW_GUARD {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

/// The sigmoid `e^t / (1 + e^t)`.
#[inline]
pub fn rho_prime(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `rho''(t) = rho'(t) (1 - rho'(t))`, evaluated without cancellation.
#[inline]
pub fn rho_double_prime(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    let d = 1.0 + e;
    e / (d * d)
}

/// Output of [`prox_rho`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxResult {
    pub x: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Proximal map of `lambda * rho`: the unique root of `lambda rho'(x) + x = z`.
///
/// The map `x -> lambda rho'(x) + x` is strictly increasing and the root
/// always lies in `[z - lambda, z]`, so a Newton iteration safeguarded by
/// bisection on that bracket cannot fail for finite input.
pub fn prox_rho(lambda: f64, z: f64) -> ProxResult {
    if lambda == 0.0 {
        return ProxResult {
            x: z,
            converged: true,
            iterations: 0,
        };
    }
    let tol = PROX_TOL * z.abs().max(1.0);
    let (mut lo, mut hi) = (z - lambda, z);
    let mut x = z - lambda * rho_prime(z);
    let (mut dx, mut dx_old) = (hi - lo, hi - lo);
    for it in 1..=PROX_MAX_ITER {
        let g = lambda * rho_prime(x) + x - z;
        if g.abs() <= tol {
            return ProxResult {
                x,
                converged: true,
                iterations: it,
            };
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = 1.0 + lambda * rho_double_prime(x);
        let mut next = x - g / slope;
        // Bisect when Newton leaves the bracket or fails to halve the
        // step before last.
        if !(next > lo && next < hi) || 2.0 * g.abs() > (dx_old * slope).abs() {
            next = 0.5 * (lo + hi);
        }
        dx_old = dx;
        dx = next - x;
        if next == x || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            let g = lambda * rho_prime(next) + next - z;
            return ProxResult {
                x: next,
                converged: g.abs() <= tol,
                iterations: it,
            };
        }
        x = next;
    }
    ProxResult {
        x,
        converged: false,
        iterations: PROX_MAX_ITER,
    }
}

/// Like [`prox_rho`] but reports non-convergence as an error.
pub fn try_prox_rho(lambda: f64, z: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !z.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prox requires lambda >= 0 and finite z (lambda={lambda}, z={z})"
        )));
    }
    let r = prox_rho(lambda, z);
    if r.converged {
        Ok(r.x)
    } else {
        Err(Error::NonConvergence {
            what: "prox_rho",
            iterations: r.iterations,
            residual: (lambda * rho_prime(r.x) + r.x - z).abs(),
        })
    }
}

/// Derivative of `z -> prox_{lambda rho}(z)` given the proximal point.
#[inline]
pub fn prox_rho_deriv(lambda: f64, x_prox: f64) -> f64 {
    1.0 / (1.0 + lambda * rho_double_prime(x_prox))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bisect_prox(lambda: f64, z: f64) -> f64 {
        let (mut lo, mut hi) = (z - lambda - 1.0, z + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let e = mid.exp();
            let s = e / (1.0 + e);
            if lambda * s + mid - z > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(rho_prime(0.0), 0.5);
        assert_eq!(rho_double_prime(0.0), 0.25);
        assert!((rho(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!((rho_prime(3.0) + rho_prime(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rho_large_argument() {
        // rho(50) = 50 + log1p(e^-50); the correction is below one ulp of 50.
        let exact = 50.0 + (-50f64).exp();
        assert_eq!(rho(50.0), exact);
        assert!((rho(-50.0) - (-50f64).exp()).abs() < 1e-35);
        assert!(rho(800.0).is_finite());
        assert_eq!(rho_prime(-800.0), 0.0);
        assert_eq!(rho_double_prime(800.0), 0.0);
    }

    #[test]
    fn prox_identity_at_zero_lambda() {
        assert_eq!(prox_rho(0.0, 3.7).x, 3.7);
    }

    #[test]
    fn prox_matches_bisection() {
        let r = prox_rho(1.0, 0.0);
        let oracle = bisect_prox(1.0, 0.0);
        assert!(r.converged);
        assert!((r.x - oracle).abs() < 1e-12, "{} vs {}", r.x, oracle);
        assert!((r.x + 0.4).abs() < 0.01);
        assert!((rho_prime(r.x) + r.x).abs() < 1e-12);
    }

    #[test]
    fn prox_far_left_tail() {
        let r = prox_rho(2.0, -40.0);
        assert!((r.x + 40.0).abs() < 1e-10);
    }

    #[test]
    fn prox_no_newton_cycling() {
        // Plain Newton bounces between the bracket ends here.
        let lambda = 11.796128856730807;
        let r = prox_rho(lambda, 4.9253172015986015);
        assert!(r.converged);
        assert!((r.x - bisect_prox(lambda, 4.9253172015986015)).abs() < 1e-12);
    }

    #[test]
    fn prox_derivative() {
        assert_eq!(prox_rho_deriv(0.0, 1.3), 1.0);
        assert!((prox_rho_deriv(1.0, 0.0) - 0.8).abs() < 1e-15);
        let (lambda, z, h) = (1.5, 0.7, 1e-5);
        let fd = (prox_rho(lambda, z + h).x - prox_rho(lambda, z - h).x) / (2.0 * h);
        let an = prox_rho_deriv(lambda, prox_rho(lambda, z).x);
        assert!((fd - an).abs() < 1e-6);
    }

    #[test]
    fn try_prox_rejects_bad_input() {
        assert!(try_prox_rho(-1.0, 0.0).is_err());
        assert!(try_prox_rho(1.0, f64::NAN).is_err());
        assert!(try_prox_rho(1.0, 2.0).is_ok());
    }

    proptest! {
        #[test]
        fn prox_residual_and_order(lambda in 0.0f64..50.0, z1 in -60.0f64..60.0, z2 in -60.0f64..60.0) {
            let a = prox_rho(lambda, z1);
            let b = prox_rho(lambda, z2);
            prop_assert!(a.converged && b.converged);
            prop_assert!((lambda * rho_prime(a.x) + a.x - z1).abs() <= 1e-12 * z1.abs().max(1.0));
            if z1 < z2 {
                prop_assert!(a.x <= b.x);
            }
            prop_assert!((a.x - b.x).abs() <= (z1 - z2).abs() + 1e-12);
        }

        #[test]
        fn rho_is_convex(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            prop_assert!(rho(0.5 * (a + b)) <= 0.5 * (rho(a) + rho(b)) + 1e-12);
            prop_assert!(rho_double_prime(a) > 0.0);
            let s = rho_prime(a);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}
