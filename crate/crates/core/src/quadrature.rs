//! Gauss-Hermite quadrature for expectations over one standard normal and
//! over the correlated pair `(Q1, Q2)` that appears in the fixed-point
//! system.
//!
//! Rules use the probabilists' convention: `rule.expect(f)` approximates
//! `E[f(Z)]` for `Z ~ N(0, 1)` directly, with weights summing to one.
//!
//! The bivariate pair has covariance
//!
//! ```text
//! [[ gamma^2,          -alpha gamma^2                 ],
//!  [ -alpha gamma^2,    alpha^2 gamma^2 + kappa sigma^2 ]]
//! ```
//!
//! and is whitened through its lower Cholesky factor
//! `Q1 = gamma Z1`, `Q2 = -alpha gamma Z1 + sqrt(kappa) sigma Z2`, so the
//! `gamma = 0` and `sigma = 0` cases become explicit one-dimensional paths.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 48;
pub const MAX_ORDER: usize = 256;

/// Nodes and weights of an `order`-point Gauss-Hermite rule against the
/// standard normal density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// `E[f(Z)]`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        gh_rule(DEFAULT_ORDER).expect("default order is supported")
    }
}

/// Builds the Gauss-Hermite rule of the given order (2..=256).
///
/// Roots of the orthonormal Hermite polynomials are found by Newton's
/// method, seeded by the eigenvalues of the Jacobi matrix, then mapped to
/// the probabilists' scale.
pub fn gh_rule(order: usize) -> Result<QuadratureRule> {
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {order} not in [2, {MAX_ORDER}]"
        )));
    }
    let n = order;
    let nf = n as f64;
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    // Eigenvalues of the Jacobi matrix seed Newton on each root.
    let jacobi = faer::Mat::<f64>::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses = jacobi
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::NonConvergence {
            what: "jacobi eigenvalues",
            iterations: 0,
            residual: f64::NAN,
        })?;
    guesses.sort_by(|a, b| b.total_cmp(a));
    for i in 0..n.div_ceil(2) {
        let mut z = guesses[i];
        let mut pp = 0.0;
        let mut log_scale = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            // The recurrence overflows for large orders, so it is rescaled
            // as it runs; `log_scale` keeps track for the weight.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            log_scale = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                if p1.abs() > 1e100 {
                    p1 *= 1e-100;
                    p2 *= 1e-100;
                    log_scale += 100.0 * std::f64::consts::LN_10;
                }
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "gauss-hermite node",
                iterations: 100,
                residual: z,
            });
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let wi = (2f64.ln() - 2.0 * (pp.abs().ln() + log_scale)).exp();
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    // physicists' -> probabilists'
    let total: f64 = w.iter().sum();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / total).collect();
    nodes.reverse();
    weights.reverse();
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        order,
    })
}

/// Parameters of the bivariate normal `(Q1, Q2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateGaussianSpec {
    pub alpha: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl BivariateGaussianSpec {
    pub fn new(alpha: f64, sigma: f64, kappa: f64, gamma: f64) -> Self {
        Self {
            alpha,
            sigma,
            kappa,
            gamma,
        }
    }

    /// Covariance matrix `[[s11, s12], [s12, s22]]`.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let g2 = self.gamma * self.gamma;
        let s12 = -self.alpha * g2;
        [
            [g2, s12],
            [s12, self.alpha * self.alpha * g2 + self.kappa * self.sigma * self.sigma],
        ]
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    pub fn cholesky(&self) -> Result<(f64, f64, f64)> {
        self.validate()?;
        Ok((
            self.gamma,
            -self.alpha * self.gamma,
            self.kappa.sqrt() * self.sigma,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.sigma.is_finite()
            && self.kappa.is_finite()
            && self.gamma.is_finite()
            && self.sigma >= 0.0
            && self.kappa >= 0.0
            && self.gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::NotPsd)
        }
    }
}

/// `E[f(Q1, Q2)]` by tensorized quadrature.
pub fn expect_bivariate<F>(f: F, spec: &BivariateGaussianSpec, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let [v] = expect_bivariate_many(|q1, q2| [f(q1, q2)], spec, rule)?;
    Ok(v)
}

/// Several expectations over the same nodes in one pass, so integrands can
/// share expensive intermediate values such as prox evaluations.
pub fn expect_bivariate_many<const K: usize, F>(
    f: F,
    spec: &BivariateGaussianSpec,
    rule: &QuadratureRule,
) -> Result<[f64; K]>
where
    F: Fn(f64, f64) -> [f64; K],
{
    let (l11, l21, l22) = spec.cholesky()?;
    let mut acc = [0.0; K];
    let mut add = |w: f64, v: [f64; K]| {
        for (a, b) in acc.iter_mut().zip(v) {
            *a += w * b;
        }
    };
    match (l11 > 0.0, l22 > 0.0) {
        (false, false) => add(1.0, f(0.0, 0.0)),
        (false, true) => {
            for (&z2, &w2) in rule.nodes.iter().zip(&rule.weights) {
                add(w2, f(0.0, l22 * z2));
            }
        }
        (true, false) => {
            for (&z1, &w1) in rule.nodes.iter().zip(&rule.weights) {
                add(w1, f(l11 * z1, l21 * z1));
            }
        }
        (true, true) => {
            for (&z1, &w1) in rule.nodes.iter().zip(&rule.weights) {
                let q1 = l11 * z1;
                let shift = l21 * z1;
                let mut inner = [0.0; K];
                for (&z2, &w2) in rule.nodes.iter().zip(&rule.weights) {
                    let v = f(q1, shift + l22 * z2);
                    for (a, b) in inner.iter_mut().zip(v) {
                        *a += w2 * b;
                    }
                }
                add(w1, inner);
            }
        }
    }
    Ok(acc)
}
