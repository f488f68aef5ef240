//! The three-variable fixed-point system characterizing the MLE.
//!
//! For dimensionality `kappa` and signal strength `gamma` the unknowns
//! `(alpha, sigma, lambda)` solve
//!
//! ```text
//! sigma^2 = kappa^-2 E[ 2 rho'(Q1) (lambda rho'(prox(Q2)))^2 ]
//!       0 =          E[ rho'(Q1) Q1 lambda rho'(prox(Q2)) ]
//! 1-kappa =          E[ 2 rho'(Q1) / (1 + lambda rho''(prox(Q2))) ]
//! ```
//!
//! with `prox = prox_{lambda rho}` and `(Q1, Q2)` the bivariate normal of
//! [`crate::quadrature`]. The solver runs the variance map (solve the last
//! equation for `lambda`, then update `alpha` and `sigma^2`) as a damped
//! fixed-point iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_boundary;
use crate::prox::{prox_rho, rho_double_prime, rho_prime};
use crate::quadrature::{expect_bivariate_many, gh_rule, BivariateGaussianSpec, QuadratureRule};
use crate::roots::brent;

const LAMBDA_LO: f64 = 1e-8;
const LAMBDA_HI_START: f64 = 8.0;
const LAMBDA_HI_MAX: f64 = 512.0;
const SIGMA_BLOWUP: f64 = 1e6;

/// The asymptotic triple `(alpha*, sigma*, lambda*)` for a given `(kappa, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionTriple {
    pub alpha_star: f64,
    pub sigma_star: f64,
    pub lambda_star: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Largest absolute residual of the three equations at the triple.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl SolutionTriple {
    /// Rescaling of the chi-square limit of twice the log-likelihood ratio.
    pub fn lrt_factor(&self) -> f64 {
        self.kappa * self.sigma_star * self.sigma_star / self.lambda_star
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub quad_order: usize,
    pub max_iter: usize,
    /// Stop when `max(|d alpha|, |d sigma|)` falls below this.
    pub tol: f64,
    pub damping: f64,
    pub init: (f64, f64),
    /// Reject `(kappa, gamma)` outside the existence region before iterating.
    pub check_region: bool,
    /// Require `gamma < region_margin * g_mle(kappa)`.
    pub region_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            quad_order: crate::quadrature::DEFAULT_ORDER,
            max_iter: 5000,
            tol: 1e-10,
            damping: 0.5,
            init: (1.0, 1.0),
            check_region: true,
            region_margin: 0.999,
        }
    }
}

/// Integrals of the system at a fixed `(alpha, sigma, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMoments {
    /// `E[2 rho'(Q1) Q1 lambda rho'(prox(Q2))]`
    pub alpha_moment: f64,
    /// `E[2 rho'(Q1) (lambda rho'(prox(Q2)))^2]`
    pub sigma_moment: f64,
    /// `E[2 rho'(Q1) / (1 + lambda rho''(prox(Q2)))]`
    pub lambda_moment: f64,
}

/// Evaluates the system for fixed `(kappa, gamma)` with a stored rule.
#[derive(Debug, Clone)]
pub struct StateEvolution {
    pub kappa: f64,
    pub gamma: f64,
    rule: QuadratureRule,
}

impl StateEvolution {
    pub fn new(kappa: f64, gamma: f64, quad_order: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "kappa must lie in (0, 0.5], got {kappa}"
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        Ok(Self {
            kappa,
            gamma,
            rule: gh_rule(quad_order)?,
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    fn spec(&self, alpha: f64, sigma: f64) -> BivariateGaussianSpec {
        BivariateGaussianSpec::new(alpha, sigma, self.kappa, self.gamma)
    }

    /// Left side of the lambda equation.
    pub fn lambda_moment(&self, alpha: f64, sigma: f64, lambda: f64) -> Result<f64> {
        let [v] = expect_bivariate_many(
            |q1, q2| {
                let x = prox_rho(lambda, q2).x;
                [2.0 * rho_prime(q1) / (1.0 + lambda * rho_double_prime(x))]
            },
            &self.spec(alpha, sigma),
            &self.rule,
        )?;
        Ok(v)
    }

    pub fn moments(&self, alpha: f64, sigma: f64, lambda: f64) -> Result<SystemMoments> {
        let [a, s, l] = expect_bivariate_many(
            |q1, q2| {
                let x = prox_rho(lambda, q2).x;
                let w = 2.0 * rho_prime(q1);
                let r = lambda * rho_prime(x);
                [w * q1 * r, w * r * r, w / (1.0 + lambda * rho_double_prime(x))]
            },
            &self.spec(alpha, sigma),
            &self.rule,
        )?;
        Ok(SystemMoments {
            alpha_moment: a,
            sigma_moment: s,
            lambda_moment: l,
        })
    }

    /// Solves the lambda equation for fixed `(alpha, sigma)`.
    ///
    /// At `lambda = 0` the left side equals one and it decreases in
    /// `lambda`, so for `kappa > 0` a root exists whenever the bracket can
    /// be expanded far enough.
    pub fn solve_lambda(&self, alpha: f64, sigma: f64) -> Result<f64> {
        self.spec(alpha, sigma).validate()?;
        let target = 1.0 - self.kappa;
        let f = |lambda: f64| -> Result<f64> { Ok(self.lambda_moment(alpha, sigma, lambda)? - target) };
        let mut hi = LAMBDA_HI_START;
        loop {
            let fhi = f(hi)?;
            if fhi < 0.0 {
                break;
            }
            if hi >= LAMBDA_HI_MAX {
                return Err(Error::BracketFailure { lo: LAMBDA_LO, hi });
            }
            hi *= 2.0;
        }
        if f(LAMBDA_LO)? <= 0.0 {
            return Err(Error::BracketFailure { lo: LAMBDA_LO, hi });
        }
        brent(f, LAMBDA_LO, hi, 1e-13, 200)
    }

    /// One step of the variance map: returns `(alpha_next, sigma_next, lambda_t)`.
    pub fn variance_map_step(&self, alpha: f64, sigma: f64) -> Result<(f64, f64, f64)> {
        let lambda = self.solve_lambda(alpha, sigma)?;
        let m = self.moments(alpha, sigma, lambda)?;
        let alpha_next = if self.gamma > 0.0 {
            alpha + m.alpha_moment / (self.kappa * self.gamma * self.gamma)
        } else {
            0.0
        };
        let sigma_next = (m.sigma_moment / (self.kappa * self.kappa)).sqrt();
        Ok((alpha_next, sigma_next, lambda))
    }

    /// Residuals of the three equations at `(alpha, sigma, lambda)`.
    pub fn residuals(&self, alpha: f64, sigma: f64, lambda: f64) -> Result<[f64; 3]> {
        let m = self.moments(alpha, sigma, lambda)?;
        Ok([
            sigma * sigma - m.sigma_moment / (self.kappa * self.kappa),
            0.5 * m.alpha_moment,
            m.lambda_moment - (1.0 - self.kappa),
        ])
    }

    /// Damped fixed-point iteration of the variance map.
    pub fn solve(&self, opts: &SolveOptions) -> Result<SolutionTriple> {
        let (kappa, gamma) = (self.kappa, self.gamma);
        if kappa >= 0.5 {
            return Err(Error::OutsideExistenceRegion {
                kappa,
                gamma,
                reason: "kappa must be below 1/2".into(),
            });
        }
        if opts.check_region && gamma > 0.0 {
            let limit = phase_boundary::g_mle(kappa)?;
            if gamma >= opts.region_margin * limit {
                return Err(Error::OutsideExistenceRegion {
                    kappa,
                    gamma,
                    reason: format!("gamma must stay below {:.6} (boundary {limit:.6})", opts.region_margin * limit),
                });
            }
        }
        let (mut alpha, sigma0) = opts.init;
        if gamma == 0.0 {
            alpha = 0.0;
        }
        let mut sigma_sq = sigma0 * sigma0;
        let mut damping = opts.damping;
        let mut prev_delta = f64::INFINITY;
        let mut shrinking = 0usize;
        let mut doublings = 0usize;
        for it in 1..=opts.max_iter {
            let sigma = sigma_sq.sqrt();
            let (alpha_next, sigma_next, _) = self.variance_map_step(alpha, sigma).map_err(|e| match e {
                Error::BracketFailure { .. } => Error::OutsideExistenceRegion {
                    kappa,
                    gamma,
                    reason: format!("lambda equation has no root at iteration {it}: {e}"),
                },
                other => other,
            })?;
            if !sigma_next.is_finite() || sigma_next > SIGMA_BLOWUP {
                return Err(Error::OutsideExistenceRegion {
                    kappa,
                    gamma,
                    reason: format!("sigma diverged at iteration {it}"),
                });
            }
            if sigma_next > 2.0 * sigma {
                doublings += 1;
                if doublings >= 5 {
                    return Err(Error::OutsideExistenceRegion {
                        kappa,
                        gamma,
                        reason: "sigma kept doubling".into(),
                    });
                }
            } else {
                doublings = 0;
            }
            let delta = (alpha_next - alpha).abs().max((sigma_next - sigma).abs());
            if delta < opts.tol {
                alpha = alpha_next;
                let sigma = sigma_next;
                let lambda = self.solve_lambda(alpha, sigma)?;
                let res = self.residuals(alpha, sigma, lambda)?;
                return Ok(SolutionTriple {
                    alpha_star: alpha,
                    sigma_star: sigma,
                    lambda_star: lambda,
                    kappa,
                    gamma,
                    residual_norm: res.iter().fold(0.0f64, |m, r| m.max(r.abs())),
                    iterations: it,
                });
            }
            if delta < prev_delta {
                shrinking += 1;
                if shrinking >= 3 {
                    damping = 1.0;
                }
            } else {
                shrinking = 0;
                damping = opts.damping;
            }
            prev_delta = delta;
            alpha += damping * (alpha_next - alpha);
            sigma_sq += damping * (sigma_next * sigma_next - sigma_sq);
        }
        Err(Error::NonConvergence {
            what: "variance map iteration",
            iterations: opts.max_iter,
            residual: prev_delta,
        })
    }
}

/// Solves the lambda equation with the default quadrature order.
pub fn solve_lambda(alpha: f64, sigma: f64, kappa: f64, gamma: f64) -> Result<f64> {
    StateEvolution::new(kappa, gamma, crate::quadrature::DEFAULT_ORDER)?.solve_lambda(alpha, sigma)
}

/// One variance-map step with the default quadrature order.
pub fn variance_map_step(alpha: f64, sigma: f64, kappa: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    StateEvolution::new(kappa, gamma, crate::quadrature::DEFAULT_ORDER)?.variance_map_step(alpha, sigma)
}

/// Solves the full system for `(kappa, gamma)`.
pub fn solve_system(kappa: f64, gamma: f64, opts: &SolveOptions) -> Result<SolutionTriple> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::OutsideExistenceRegion {
            kappa,
            gamma,
            reason: "kappa must lie in (0, 1/2)".into(),
        });
    }
    StateEvolution::new(kappa, gamma, opts.quad_order)?.solve(opts)
}

/// Solves the two-equation system that remains when `gamma = 0`:
///
/// ```text
/// sigma^2 = kappa^-2 E[(lambda rho'(prox(tau Z)))^2]
/// 1-kappa =          E[1 / (1 + lambda rho''(prox(tau Z)))],   tau^2 = kappa sigma^2
/// ```
///
/// Returns `(sigma*, lambda*)`. Uses only one-dimensional quadrature and
/// shares no code with the bivariate path.
pub fn solve_reduced(kappa: f64) -> Result<(f64, f64)> {
    solve_reduced_with(kappa, &SolveOptions::default())
}

pub fn solve_reduced_with(kappa: f64, opts: &SolveOptions) -> Result<(f64, f64)> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::OutsideExistenceRegion {
            kappa,
            gamma: 0.0,
            reason: "kappa must lie in (0, 1/2)".into(),
        });
    }
    let rule = gh_rule(opts.quad_order)?;
    let lambda_for = |tau: f64| -> Result<f64> {
        let f = |lambda: f64| -> Result<f64> {
            Ok(rule.expect(|z| {
                let x = prox_rho(lambda, tau * z).x;
                1.0 / (1.0 + lambda * rho_double_prime(x))
            }) - (1.0 - kappa))
        };
        let mut hi = LAMBDA_HI_START;
        while f(hi)? >= 0.0 {
            if hi >= LAMBDA_HI_MAX {
                return Err(Error::OutsideExistenceRegion {
                    kappa,
                    gamma: 0.0,
                    reason: "lambda bracket exhausted".into(),
                });
            }
            hi *= 2.0;
        }
        brent(f, LAMBDA_LO, hi, 1e-13, 200)
    };
    let mut sigma_sq = opts.init.1 * opts.init.1;
    let mut prev = f64::INFINITY;
    let mut damping = opts.damping;
    for _ in 0..opts.max_iter {
        let tau = (kappa * sigma_sq).sqrt();
        let lambda = lambda_for(tau)?;
        let next_sq = rule.expect(|z| {
            let r = lambda * rho_prime(prox_rho(lambda, tau * z).x);
            r * r
        }) / (kappa * kappa);
        if !next_sq.is_finite() || next_sq > SIGMA_BLOWUP * SIGMA_BLOWUP {
            return Err(Error::OutsideExistenceRegion {
                kappa,
                gamma: 0.0,
                reason: "sigma diverged".into(),
            });
        }
        let delta = (next_sq.sqrt() - sigma_sq.sqrt()).abs();
        if delta < opts.tol {
            let sigma = next_sq.sqrt();
            let lambda = lambda_for((kappa * next_sq).sqrt())?;
            return Ok((sigma, lambda));
        }
        damping = if delta < prev { 1.0 } else { opts.damping.min(damping) };
        prev = delta;
        sigma_sq += damping * (next_sq - sigma_sq);
    }
    Err(Error::NonConvergence {
        what: "reduced variance map",
        iterations: opts.max_iter,
        residual: prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_vanishes_with_kappa() {
        let l = solve_lambda(1.0, 1.0, 1e-4, 1.0).unwrap();
        assert!(l > 0.0 && l < 1e-2, "{l}");
        let l2 = solve_lambda(1.0, 1.0, 1e-3, 1.0).unwrap();
        assert!(l2 > l);
    }

    #[test]
    fn lambda_self_consistent_at_known_fixed_point() {
        let l = solve_lambda(1.1678, 3.3466, 0.1, 5f64.sqrt()).unwrap();
        assert!((l - 0.9605).abs() < 1e-3, "{l}");
    }

    #[test]
    fn step_is_stationary_at_known_fixed_point() {
        let (a, s, _) = variance_map_step(1.1678, 3.3466, 0.1, 5f64.sqrt()).unwrap();
        assert!((a - 1.1678).abs() < 1e-4, "{a}");
        assert!((s - 3.3466).abs() < 1e-4, "{s}");
    }

    #[test]
    fn gamma_zero_keeps_alpha_at_zero() {
        let se = StateEvolution::new(0.2, 0.0, 32).unwrap();
        let (a, s, _) = se.variance_map_step(0.0, 1.0).unwrap();
        assert_eq!(a, 0.0);
        assert!(s > 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(StateEvolution::new(0.0, 1.0, 48).is_err());
        assert!(StateEvolution::new(0.7, 1.0, 48).is_err());
        assert!(StateEvolution::new(0.1, -1.0, 48).is_err());
        assert!(matches!(
            solve_system(0.5, 0.0, &SolveOptions::default()),
            Err(Error::OutsideExistenceRegion { .. })
        ));
    }

    #[test]
    fn solves_reference_point() {
        let t = solve_system(0.1, 5f64.sqrt(), &SolveOptions::default()).unwrap();
        assert!((t.alpha_star - 1.1678).abs() < 1e-3);
        assert!((t.sigma_star - 3.3466).abs() < 1e-3);
        assert!((t.lambda_star - 0.9605).abs() < 1e-3);
        assert!((t.lrt_factor() - 1.1660).abs() < 1e-3);
        assert!(t.residual_norm < 1e-7, "{}", t.residual_norm);
        assert_eq!(t.lrt_factor(), t.kappa * t.sigma_star * t.sigma_star / t.lambda_star);
    }

    #[test]
    fn small_kappa_bias_near_one() {
        let t = solve_system(0.01, 5f64.sqrt(), &SolveOptions::default()).unwrap();
        assert!(t.alpha_star > 1.0 && t.alpha_star < 1.05, "{}", t.alpha_star);
    }

    #[test]
    fn outside_region_rejected() {
        let r = solve_system(0.45, 3.0, &SolveOptions::default());
        assert!(matches!(r, Err(Error::OutsideExistenceRegion { .. })), "{r:?}");
    }

    #[test]
    fn reduced_matches_small_gamma() {
        for kappa in [0.1, 0.2, 0.3] {
            let (s, l) = solve_reduced(kappa).unwrap();
            let t = solve_system(kappa, 1e-4, &SolveOptions::default()).unwrap();
            assert!((s - t.sigma_star).abs() < 1e-3, "{kappa}: {s} vs {}", t.sigma_star);
            assert!((l - t.lambda_star).abs() < 1e-3);
        }
    }

    #[test]
    fn reduced_factor_tends_to_one() {
        let (s, l) = solve_reduced(0.001).unwrap();
        let f = 0.001 * s * s / l;
        assert!((f - 1.0).abs() < 0.01, "{f}");
        let mut last = f;
        for kappa in [0.05, 0.1, 0.2, 0.3, 0.4] {
            let (s, l) = solve_reduced(kappa).unwrap();
            let f = kappa * s * s / l;
            assert!(f > last, "factor not increasing at {kappa}");
            last = f;
        }
    }
}
