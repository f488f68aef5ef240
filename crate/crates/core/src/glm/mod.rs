//! Maximum-likelihood logistic regression without intercept: the negative
//! log-likelihood `l(b) = sum rho(x_i'b) - y_i x_i'b`, its derivatives, a
//! damped Newton solver, likelihood-ratio statistics, separation checks
//! and the classical Fisher-information standard errors.

pub mod data;
pub mod lp;
pub mod separation;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use data::{Dataset, DesignTag};
pub use separation::{check_separation, separation_lp, separation_threshold, separation_threshold_from, SeparationResult};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};
use crate::prox::{rho, rho_double_prime, rho_prime};
use crate::quadrature::gh_rule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(with = "crate::serde_vec")]
    pub beta_hat: Array1<f64>,
    pub converged: bool,
    pub separated: bool,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    /// Sup norm of the gradient at `beta_hat`.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged once `|grad|_inf <= grad_tol * n`.
    pub grad_tol: f64,
    /// Run the separation LP before iterating.
    pub check_separation: bool,
    /// Coefficients beyond this sup norm are taken as a diverging path.
    pub max_beta_norm: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-10,
            check_separation: false,
            max_beta_norm: 1e8,
        }
    }
}

fn check_dim(beta: &ArrayView1<'_, f64>, data: &Dataset) -> Result<()> {
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            got: beta.len(),
        });
    }
    Ok(())
}

fn nll_from_eta(eta: &[f64], y: &ArrayView1<'_, f64>) -> f64 {
    eta.iter().zip(y.iter()).map(|(&e, &yi)| rho(e) - yi * e).sum()
}

fn linear_predictor(x: &ArrayView2<'_, f64>, beta: &ArrayView1<'_, f64>) -> Vec<f64> {
    linalg::matvec(x, beta).to_vec()
}

fn score_from_eta(x: &ArrayView2<'_, f64>, eta: &[f64], y: &ArrayView1<'_, f64>) -> Array1<f64> {
    let r: Array1<f64> = eta.iter().zip(y.iter()).map(|(&e, &yi)| rho_prime(e) - yi).collect();
    linalg::matvec_t(x, &r.view())
}

fn sup_norm(v: &ArrayView1<'_, f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn neg_log_likelihood(beta: &ArrayView1<'_, f64>, data: &Dataset) -> Result<f64> {
    check_dim(beta, data)?;
    let eta = linear_predictor(&data.x().view(), beta);
    Ok(nll_from_eta(&eta, &data.y().view()))
}

/// `X'(rho'(X b) - y)`.
pub fn gradient(beta: &ArrayView1<'_, f64>, data: &Dataset) -> Result<Array1<f64>> {
    check_dim(beta, data)?;
    let x = data.x().view();
    let eta = linear_predictor(&x, beta);
    Ok(score_from_eta(&x, &eta, &data.y().view()))
}

/// `X' diag(rho''(X b)) X`.
pub fn hessian(beta: &ArrayView1<'_, f64>, data: &Dataset) -> Result<Array2<f64>> {
    check_dim(beta, data)?;
    let x = data.x().view();
    let d: Vec<f64> = linear_predictor(&x, beta).into_iter().map(rho_double_prime).collect();
    Ok(linalg::weighted_gram(&x, &d))
}

fn hessian_factor(x: &ArrayView2<'_, f64>, eta: &[f64]) -> Result<SpdFactor> {
    let d: Vec<f64> = eta.iter().map(|&e| rho_double_prime(e)).collect();
    SpdFactor::new(&linalg::weighted_gram_lower(x, &d))
}

/// Newton iteration from `beta0`. Returns the fit and the Hessian factor
/// from the last step taken.
fn newton(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    beta0: Array1<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = x.nrows() as f64;
    let tol = opts.grad_tol * n;
    let mut beta = beta0;
    let mut eta = linear_predictor(x, &beta.view());
    let mut nll = nll_from_eta(&eta, y);
    let mut grad = score_from_eta(x, &eta, y);
    let mut grad_norm = sup_norm(&grad.view());
    // On separable data the gradient vanishes along a diverging path, but
    // the Newton decrement stays comparable to the objective itself, so a
    // small gradient alone does not certify an optimum.
    let mut last_decrement = 0.0;
    for it in 0..opts.max_iter {
        if grad_norm <= tol && last_decrement <= 1e-6 * nll {
            return Ok(FitResult {
                beta_hat: beta,
                converged: true,
                separated: false,
                neg_log_likelihood: nll,
                iterations: it,
                grad_norm,
            });
        }
        let step = hessian_factor(x, &eta)?.solve(&grad.view());
        let decrement: f64 = grad.dot(&step);
        let dir_eta = linear_predictor(x, &step.view());
        let mut t = 1.0;
        loop {
            let cand_eta: Vec<f64> = eta.iter().zip(&dir_eta).map(|(e, d)| e - t * d).collect();
            let cand = nll_from_eta(&cand_eta, y);
            // Once the predicted decrease is at rounding level the
            // objective can no longer rank steps, so take the full one.
            let rounding = decrement <= 1e-13 * nll.abs().max(1.0);
            if cand <= nll - 1e-4 * t * decrement || rounding {
                beta.scaled_add(-t, &step);
                last_decrement = decrement;
                eta = cand_eta;
                nll = cand;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NonConvergence {
                    what: "newton line search",
                    iterations: it + 1,
                    residual: grad_norm,
                });
            }
        }
        if sup_norm(&beta.view()) > opts.max_beta_norm {
            return Err(Error::NonConvergence {
                what: "newton (coefficients diverging)",
                iterations: it + 1,
                residual: grad_norm,
            });
        }
        grad = score_from_eta(x, &eta, y);
        grad_norm = sup_norm(&grad.view());
    }
    if grad_norm <= tol && last_decrement <= 1e-6 * nll {
        return Ok(FitResult {
            beta_hat: beta,
            converged: true,
            separated: false,
            neg_log_likelihood: nll,
            iterations: opts.max_iter,
            grad_norm,
        });
    }
    Err(Error::NonConvergence {
        what: "newton",
        iterations: opts.max_iter,
        residual: grad_norm,
    })
}

fn require_fittable(data: &Dataset) -> Result<()> {
    if data.n() <= data.p() {
        return Err(Error::InvalidArgument(format!(
            "fitting needs n > p, got n = {}, p = {}",
            data.n(),
            data.p()
        )));
    }
    Ok(())
}

/// Damped Newton from zero. With `opts.check_separation` set, separable
/// data return `separated = true` without iterating.
pub fn fit_mle(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    fit_mle_from(data, Array1::zeros(data.p()), opts)
}

pub fn fit_mle_from(data: &Dataset, beta0: Array1<f64>, opts: &FitOptions) -> Result<FitResult> {
    require_fittable(data)?;
    check_dim(&beta0.view(), data)?;
    if opts.check_separation && check_separation(data)? {
        return Ok(FitResult {
            beta_hat: Array1::from_elem(data.p(), f64::NAN),
            converged: false,
            separated: true,
            neg_log_likelihood: 0.0,
            iterations: 0,
            grad_norm: f64::NAN,
        });
    }
    newton(&data.x().view(), &data.y().view(), beta0, opts)
}

fn converged_fit(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    let fit = fit_mle(data, opts)?;
    if fit.separated {
        return Err(Error::Separated);
    }
    Ok(fit)
}

/// `min_{b: b_drop = 0} l(b) - min_b l(b)`, refitting on the kept columns.
pub fn llr_statistic(data: &Dataset, drop: &[usize], opts: &FitOptions) -> Result<f64> {
    let full = converged_fit(data, opts)?;
    llr_against(data, &full, drop, opts)
}

/// Like [`llr_statistic`] with the full fit supplied.
pub fn llr_against(data: &Dataset, full: &FitResult, drop: &[usize], opts: &FitOptions) -> Result<f64> {
    if let Some(&j) = drop.iter().find(|&&j| j >= data.p()) {
        return Err(Error::InvalidArgument(format!("column {j} out of range")));
    }
    if drop.is_empty() {
        return Ok(0.0);
    }
    let reduced = data.drop_columns(drop);
    let warm: Array1<f64> = (0..data.p())
        .filter(|j| !drop.contains(j))
        .map(|j| full.beta_hat[j])
        .collect();
    let fit = fit_mle_from(&reduced, warm, opts)?;
    Ok((fit.neg_log_likelihood - full.neg_log_likelihood).max(0.0))
}

/// A converged full fit with the inverse Hessian at the optimum, for
/// cheap single-coordinate likelihood-ratio statistics.
pub struct NullTester<'a> {
    data: &'a Dataset,
    pub fit: FitResult,
    pub inv_hessian: Array2<f64>,
    opts: FitOptions,
}

impl<'a> NullTester<'a> {
    pub fn new(data: &'a Dataset, opts: &FitOptions) -> Result<Self> {
        let fit = converged_fit(data, opts)?;
        Self::from_fit(data, fit, opts)
    }

    pub fn from_fit(data: &'a Dataset, fit: FitResult, opts: &FitOptions) -> Result<Self> {
        let eta = linear_predictor(&data.x().view(), &fit.beta_hat.view());
        let inv_hessian = hessian_factor(&data.x().view(), &eta)?.inverse();
        Ok(Self {
            data,
            fit,
            inv_hessian,
            opts: opts.clone(),
        })
    }

    /// Plugin standard errors `sqrt(diag(H^-1))`.
    pub fn plugin_se(&self) -> Array1<f64> {
        self.inv_hessian.diag().mapv(f64::sqrt)
    }

    /// `Lambda_j` for dropping coordinate `j`.
    ///
    /// Minimizes over `{b_j = 0}` by a chord iteration that reuses the
    /// inverse Hessian at the full optimum; falls back to a Newton refit
    /// of the reduced model if that stalls.
    pub fn llr(&self, j: usize) -> Result<f64> {
        let p = self.data.p();
        if j >= p {
            return Err(Error::InvalidArgument(format!("column {j} out of range")));
        }
        match self.chord(j) {
            Some(nll) => Ok((nll - self.fit.neg_log_likelihood).max(0.0)),
            None => llr_against(self.data, &self.fit, &[j], &self.opts),
        }
    }

    fn chord(&self, j: usize) -> Option<f64> {
        let x = self.data.x().view();
        let y = self.data.y().view();
        let g = &self.inv_hessian;
        let gj = g.column(j);
        let gjj = gj[j];
        if gjj <= 0.0 {
            return None;
        }
        let project = |u: &Array1<f64>| -> Array1<f64> {
            let mut d = u - &(&gj * (u[j] / gjj));
            d[j] = 0.0;
            d
        };
        let mut b = &self.fit.beta_hat - &(&gj * (self.fit.beta_hat[j] / gjj));
        b[j] = 0.0;
        let mut eta = linear_predictor(&x, &b.view());
        let mut nll = nll_from_eta(&eta, &y);
        let tol = self.opts.grad_tol * x.nrows() as f64;
        for _ in 0..60 {
            let mut grad = score_from_eta(&x, &eta, &y);
            grad[j] = 0.0;
            if sup_norm(&grad.view()) <= tol {
                return Some(nll);
            }
            let step = project(&g.dot(&grad));
            let decrement = grad.dot(&step);
            if decrement <= 0.0 {
                return None;
            }
            let dir_eta = linear_predictor(&x, &step.view());
            let mut t = 1.0;
            loop {
                let cand_eta: Vec<f64> = eta.iter().zip(&dir_eta).map(|(e, d)| e - t * d).collect();
                let cand = nll_from_eta(&cand_eta, &y);
                let rounding = decrement <= 1e-13 * nll.abs().max(1.0);
                if cand <= nll - 1e-4 * t * decrement || rounding {
                    b.scaled_add(-t, &step);
                    eta = cand_eta;
                    nll = cand;
                    break;
                }
                t *= 0.5;
                if t < 1e-6 {
                    return None;
                }
            }
        }
        None
    }
}

/// `nu = E[rho''(gamma Z)]` and `delta = (E[rho''(gamma Z) Z^2] - nu) / nu`.
pub fn fisher_constants(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be finite and nonnegative, got {gamma}"
        )));
    }
    let rule = gh_rule(128)?;
    let nu = rule.expect(|z| rho_double_prime(gamma * z));
    let m2 = rule.expect(|z| rho_double_prime(gamma * z) * z * z);
    Ok((nu, (m2 - nu) / nu))
}

/// Classical large-sample standard deviation of a null coordinate,
/// `nu^{-1/2}`, under the unit-variance scaling of the signal.
pub fn classical_se_null(gamma: f64) -> Result<f64> {
    Ok(fisher_constants(gamma)?.0.powf(-0.5))
}

/// Classical standard deviation of each coordinate of `beta`:
/// `nu^{-1/2} (1 - delta/(1+delta) beta_j^2/|beta|^2)^{1/2}`.
pub fn classical_se_theoretical(gamma: f64, beta: &ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let (nu, delta) = fisher_constants(gamma)?;
    let norm2 = beta.dot(beta);
    let shrink = delta / (1.0 + delta);
    Ok(beta.mapv(|b| {
        let frac = if norm2 > 0.0 { b * b / norm2 } else { 0.0 };
        nu.powf(-0.5) * (1.0 - shrink * frac).sqrt()
    }))
}

/// Square roots of the diagonal of the inverse observed information.
pub fn classical_se_plugin(data: &Dataset, fit: &FitResult) -> Result<Array1<f64>> {
    if !fit.converged {
        return Err(Error::InvalidArgument("plugin standard errors need a converged fit".into()));
    }
    check_dim(&fit.beta_hat.view(), data)?;
    let eta = linear_predictor(&data.x().view(), &fit.beta_hat.view());
    Ok(hessian_factor(&data.x().view(), &eta)?.inverse().diag().mapv(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Axis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Bernoulli, Distribution, StandardNormal};

    fn random_data(n: usize, p: usize, scale: f64, seed: u64) -> (Dataset, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / (n as f64).sqrt()
        });
        let beta = Array1::from_shape_fn(p, |j| if j % 2 == 0 { scale } else { 0.0 });
        let eta = x.dot(&beta);
        let y: Array1<f64> = eta
            .iter()
            .map(|&e| Bernoulli::new(rho_prime(e)).unwrap().sample(&mut rng) as u8 as f64)
            .collect();
        (Dataset::new(x, y, DesignTag::Gaussian).unwrap(), beta)
    }

    #[test]
    fn likelihood_at_zero_and_single_point() {
        let (d, _) = random_data(30, 3, 1.0, 1);
        let l = neg_log_likelihood(&Array1::zeros(3).view(), &d).unwrap();
        assert!((l - 30.0 * 2f64.ln()).abs() < 1e-12);
        let one = Dataset::new(array![[1.0]], array![1.0], DesignTag::External).unwrap();
        let b = 0.7;
        let l = neg_log_likelihood(&array![b].view(), &one).unwrap();
        assert!((l - ((1.0 + b.exp()).ln() - b)).abs() < 1e-14);
        assert!(neg_log_likelihood(&array![1.0, 2.0].view(), &one).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (d, _) = random_data(50, 5, 3.0, 2);
        let b = array![0.3, -1.0, 2.0, 0.5, -0.25];
        let g = gradient(&b.view(), &d).unwrap();
        let h = 1e-6;
        for j in 0..5 {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[j] += h;
            bm[j] -= h;
            let fd = (neg_log_likelihood(&bp.view(), &d).unwrap()
                - neg_log_likelihood(&bm.view(), &d).unwrap())
                / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-3), "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn derivatives_at_zero() {
        let (d, _) = random_data(40, 4, 1.0, 3);
        let zero = Array1::zeros(4);
        let g = gradient(&zero.view(), &d).unwrap();
        let expect = d.x().t().dot(&d.y().mapv(|v| 0.5 - v));
        for (a, b) in g.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = hessian(&zero.view(), &d).unwrap();
        let expect = d.x().t().dot(d.x()) * 0.25;
        for (a, b) in h.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflected_data_fit_to_zero() {
        let (d, _) = random_data(40, 3, 2.0, 4);
        let x = concatenate![Axis(0), d.x().view(), (-d.x()).view()];
        let y = concatenate![Axis(0), d.y().view(), d.y().view()];
        let sym = Dataset::new(x, y, DesignTag::External).unwrap();
        let fit = fit_mle(&sym, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(sup_norm(&fit.beta_hat.view()) < 1e-10);
    }

    #[test]
    fn fit_reaches_tight_gradient() {
        let (d, _) = random_data(1000, 100, 2.0, 5);
        let fit = fit_mle(&d, &FitOptions::default()).unwrap();
        assert!(fit.converged && !fit.separated);
        assert!(fit.grad_norm < 1e-8 * 1000.0);
        let g = gradient(&fit.beta_hat.view(), &d).unwrap();
        assert!(sup_norm(&g.view()) < 1e-6);
    }

    #[test]
    fn separated_data_detected_before_iterating() {
        let x = array![[1.0, 0.2], [2.0, -0.1], [-1.0, 0.3], [-0.5, 0.1]];
        let y = array![1.0, 1.0, 0.0, 0.0];
        let d = Dataset::new(x, y, DesignTag::External).unwrap();
        let opts = FitOptions {
            check_separation: true,
            ..FitOptions::default()
        };
        let fit = fit_mle(&d, &opts).unwrap();
        assert!(fit.separated && !fit.converged && fit.iterations == 0);
        let r = fit_mle(&d, &FitOptions::default());
        assert!(r.is_err(), "{r:?}");
    }

    #[test]
    fn llr_nested_and_chord_agree_with_refit() {
        let (d, _) = random_data(400, 40, 3.0, 6);
        let opts = FitOptions::default();
        assert_eq!(llr_statistic(&d, &[], &opts).unwrap(), 0.0);
        let one = llr_statistic(&d, &[1], &opts).unwrap();
        let two = llr_statistic(&d, &[1, 3], &opts).unwrap();
        assert!(one >= 0.0 && two >= one);
        let tester = NullTester::new(&d, &opts).unwrap();
        for j in [0, 1, 7, 39] {
            let fast = tester.llr(j).unwrap();
            let slow = llr_against(&d, &tester.fit, &[j], &opts).unwrap();
            assert!((fast - slow).abs() < 1e-8 * slow.max(1.0), "{j}: {fast} vs {slow}");
        }
    }

    #[test]
    fn fisher_constants_values() {
        let (nu, _) = fisher_constants(0.0).unwrap();
        assert!((nu - 0.25).abs() < 1e-15);
        assert!((classical_se_null(0.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((classical_se_null(5f64.sqrt()).unwrap() - 2.66).abs() < 0.01);
        let se = classical_se_theoretical(1.0, &array![1.0, 0.0].view()).unwrap();
        let (_, delta) = fisher_constants(1.0).unwrap();
        assert!(delta < 0.0);
        assert!(se[0] > se[1]);
    }

    #[test]
    fn plugin_se_scalar_case() {
        let n = 100;
        let x = Array2::from_elem((n, 1), 1.0);
        let y = Array1::from_shape_fn(n, |i| if i < 70 { 1.0 } else { 0.0 });
        let d = Dataset::new(x, y, DesignTag::External).unwrap();
        let fit = fit_mle(&d, &FitOptions::default()).unwrap();
        assert!((fit.beta_hat[0] - (0.7f64 / 0.3).ln()).abs() < 1e-10);
        let se = classical_se_plugin(&d, &fit).unwrap();
        let expect = (n as f64 * rho_double_prime(fit.beta_hat[0])).powf(-0.5);
        assert!((se[0] - expect).abs() < 1e-12);
    }
}
