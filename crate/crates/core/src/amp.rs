//! Approximate message passing for the logistic MLE.
//!
//! Starting from `beta^0` and `S^0 = X beta^0`,
//!
//! ```text
//! beta^t = beta^{t-1} + kappa^-1 X' Psi(y, S^{t-1})
//!    S^t = X beta^t - Psi(y, S^{t-1})
//! ```
//!
//! with `Psi(y, s) = lambda (y - rho'(prox_{lambda rho}(lambda y + s)))` and
//! `lambda` held at the fixed-point value `lambda*`. Any fixed point of the
//! recursion has `X beta = prox(lambda y + S)`, which forces the score
//! `X'(rho'(X beta) - y)` to vanish, so a converged trajectory is the MLE.

use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::Dataset;
use crate::linalg;
use crate::prox::{prox_rho, rho_prime};
use crate::state_evolution::SolutionTriple;

/// `lambda (y - rho'(prox_{lambda rho}(lambda y + s)))`.
pub fn psi(y: f64, s: f64, lambda: f64) -> f64 {
    let x = prox_rho(lambda, lambda * y + s).x;
    lambda * (y - rho_prime(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpOptions {
    pub max_iter: usize,
    /// Stop once `max(|d beta|_inf, |grad|_inf / n)` drops below this.
    pub tol: f64,
    /// Iterates beyond this sup norm count as divergence.
    pub blowup: f64,
}

impl Default for AmpOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-9,
            blowup: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpState {
    #[serde(with = "crate::serde_vec")]
    pub beta_t: Array1<f64>,
    #[serde(with = "crate::serde_vec")]
    pub s_t: Array1<f64>,
    pub t: usize,
    pub lambda_t: f64,
}

/// One row of the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpRecord {
    pub iteration: usize,
    pub grad_norm: f64,
    pub delta_beta: f64,
    pub dist_to_mle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpTrajectory {
    pub state: AmpState,
    pub records: Vec<AmpRecord>,
    pub converged: bool,
}

impl AmpTrajectory {
    /// Writes `iteration,grad_norm,delta_beta,dist_to_mle`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `alpha* beta + sigma* Z`, the calibrated start when the truth is known.
pub fn calibrated_start<R: Rng + ?Sized>(
    beta: &ArrayView1<'_, f64>,
    triple: &SolutionTriple,
    rng: &mut R,
) -> Array1<f64> {
    beta.mapv(|b| {
        let z: f64 = rng.sample(StandardNormal);
        triple.alpha_star * b + triple.sigma_star * z
    })
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs the recursion from `beta0` with `lambda = triple.lambda_star` and
/// `kappa = p / n`. `mle`, when given, is used to log distances.
pub fn amp_run(
    data: &Dataset,
    triple: &SolutionTriple,
    beta0: Array1<f64>,
    opts: &AmpOptions,
    mle: Option<&Array1<f64>>,
) -> Result<AmpTrajectory> {
    let (n, p) = (data.n(), data.p());
    if beta0.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: beta0.len(),
        });
    }
    let lambda = triple.lambda_star;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let kappa = p as f64 / n as f64;
    let x = data.x().view();
    let y = data.y();
    let mut beta = beta0;
    let mut s = linalg::matvec(&x, &beta.view());
    let mut records = Vec::new();
    let mut converged = false;
    let mut t = 0;
    while t < opts.max_iter {
        t += 1;
        let psi_prev: Array1<f64> = y.iter().zip(s.iter()).map(|(&yi, &si)| psi(yi, si, lambda)).collect();
        let step = linalg::matvec_t(&x, &psi_prev.view()) / kappa;
        beta += &step;
        let eta = linalg::matvec(&x, &beta.view());
        s = &eta - &psi_prev;
        let resid: Array1<f64> = eta.iter().zip(y.iter()).map(|(&e, &yi)| rho_prime(e) - yi).collect();
        let grad_norm = sup(linalg::matvec_t(&x, &resid.view()).iter().copied());
        let delta_beta = sup(step.iter().copied());
        let dist_to_mle = mle.map(|m| sup(beta.iter().zip(m.iter()).map(|(a, b)| a - b)));
        records.push(AmpRecord {
            iteration: t,
            grad_norm,
            delta_beta,
            dist_to_mle,
        });
        let size = sup(beta.iter().copied());
        if !size.is_finite() || size > opts.blowup {
            return Err(Error::NonConvergence {
                what: "amp (iterates diverging)",
                iterations: t,
                residual: grad_norm,
            });
        }
        if delta_beta.max(grad_norm / n as f64) < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(AmpTrajectory {
        state: AmpState {
            beta_t: beta,
            s_t: s,
            t,
            lambda_t: lambda,
        },
        records,
        converged,
    })
}
