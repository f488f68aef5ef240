//! The curve in the `(kappa, gamma)` plane beyond which the logistic MLE
//! ceases to exist.
//!
//! For signal strength `gamma`, the critical dimensionality is
//!
//! ```text
//! kappa_boundary(gamma) = min_t E[(Z - t V)_+^2]
//! ```
//!
//! where `Z ~ N(0, 1)` and `V` is independent with density
//! `2 rho'(gamma v) phi(v)`. Conditioning on `V` turns the inner
//! expectation into the closed form [`positive_part_mse`], leaving a
//! one-dimensional integral against `phi` and a convex scalar minimization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::prox::rho_prime;
use crate::quadrature::{gh_rule, QuadratureRule};
use crate::roots::{brent, golden_section};

/// Quadrature order used when callers do not pass a rule. The tilted
/// weight `2 rho'(gamma v)` sharpens as `gamma` grows, so this is set
/// higher than the state-evolution default.
pub const BOUNDARY_ORDER: usize = 128;
const T_MAX: f64 = 1e4;
const GAMMA_MAX: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub gamma: f64,
    pub kappa_boundary: f64,
    pub t_argmin: f64,
}

/// `E[(Z - c)_+^2] = (1 + c^2) Phi(-c) - c phi(c)` for standard normal `Z`.
pub fn positive_part_mse(c: f64) -> f64 {
    (1.0 + c * c) * normal::sf(c) - c * normal::pdf(c)
}

/// The objective `F(t) = E[(Z - t V)_+^2]` for a given `gamma`.
pub fn boundary_objective(gamma: f64, t: f64, rule: &QuadratureRule) -> f64 {
    rule.expect(|v| 2.0 * rho_prime(gamma * v) * positive_part_mse(t * v))
}

/// Critical dimensionality for signal strength `gamma`, using `rule`.
pub fn g_mle_inverse_with(gamma: f64, rule: &QuadratureRule) -> Result<BoundaryPoint> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be finite and nonnegative, got {gamma}"
        )));
    }
    let f = |t: f64| boundary_objective(gamma, t, rule);
    if gamma == 0.0 {
        // F(t) = (1 + t^2) / 2
        return Ok(BoundaryPoint {
            gamma,
            kappa_boundary: f(0.0),
            t_argmin: 0.0,
        });
    }
    let mut half_width = 1.0;
    let (mut t_best, mut f_best);
    loop {
        (t_best, f_best) = golden_section(f, -half_width, half_width, 1e-10 * half_width.max(1.0));
        if t_best.abs() < 0.9 * half_width {
            break;
        }
        half_width *= 2.0;
        if half_width > T_MAX {
            return Err(Error::BracketFailure {
                lo: -half_width,
                hi: half_width,
            });
        }
    }
    // Convexity is checked, not assumed: a coarse grid must not beat the
    // golden-section answer; if it does, refine around the best grid cell.
    let steps = 40;
    let h = 2.0 * half_width / steps as f64;
    let grid_best = (0..=steps)
        .map(|i| {
            let t = -half_width + i as f64 * h;
            (t, f(t))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty grid");
    if grid_best.1 < f_best - 1e-12 {
        let (t, v) = golden_section(f, grid_best.0 - h, grid_best.0 + h, 1e-10);
        if v < f_best {
            t_best = t;
            f_best = v;
        }
    }
    Ok(BoundaryPoint {
        gamma,
        kappa_boundary: f_best,
        t_argmin: t_best,
    })
}

/// Critical dimensionality for signal strength `gamma`.
pub fn g_mle_inverse(gamma: f64) -> Result<BoundaryPoint> {
    g_mle_inverse_with(gamma, &gh_rule(BOUNDARY_ORDER)?)
}

/// Largest signal strength at which the MLE still exists for `kappa`.
pub fn g_mle_with(kappa: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "kappa must lie in (0, 1/2), got {kappa}"
        )));
    }
    let f = |gamma: f64| -> Result<f64> { Ok(g_mle_inverse_with(gamma, rule)?.kappa_boundary - kappa) };
    let mut hi = 1.0;
    while f(hi)? > 0.0 {
        hi *= 2.0;
        if hi > GAMMA_MAX {
            return Err(Error::BracketFailure { lo: 0.0, hi });
        }
    }
    brent(f, 0.0, hi, 1e-10, 200)
}

pub fn g_mle(kappa: f64) -> Result<f64> {
    g_mle_with(kappa, &gh_rule(BOUNDARY_ORDER)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_part_mse_values() {
        assert!((positive_part_mse(0.0) - 0.5).abs() < 1e-15);
        assert!((positive_part_mse(-10.0) - 101.0).abs() < 1e-12);
        assert!(positive_part_mse(10.0) >= 0.0);
        assert!(positive_part_mse(10.0) < 1e-24);
    }

    #[test]
    fn boundary_at_zero_signal() {
        let b = g_mle_inverse(0.0).unwrap();
        assert!((b.kappa_boundary - 0.5).abs() < 1e-12);
        assert_eq!(b.t_argmin, 0.0);
        // the general path agrees
        let b = g_mle_inverse(1e-9).unwrap();
        assert!((b.kappa_boundary - 0.5).abs() < 1e-6);
        assert!(b.t_argmin.abs() < 1e-4);
    }

    #[test]
    fn decreasing_in_gamma() {
        let a = g_mle_inverse(1.0).unwrap().kappa_boundary;
        let b = g_mle_inverse(2.2361).unwrap().kappa_boundary;
        assert!(b < a && a < 0.5);
    }

    #[test]
    fn g_mle_is_decreasing_and_inverts() {
        let g1 = g_mle(0.1).unwrap();
        let g2 = g_mle(0.2).unwrap();
        let g3 = g_mle(0.3).unwrap();
        assert!(g1 > g2 && g2 > g3);
        let back = g_mle_inverse(g2).unwrap().kappa_boundary;
        assert!((back - 0.2).abs() < 1e-5);
        assert!(g_mle(0.5 - 1e-6).unwrap() < 0.01);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(g_mle(0.5).is_err());
        assert!(g_mle(0.0).is_err());
        assert!(g_mle_inverse(-1.0).is_err());
    }
}
