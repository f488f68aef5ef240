//! Corrected inference from a fitted MLE and a solution triple: debiased
//! coefficients, corrected standard errors, rescaled likelihood-ratio
//! p-values and debiased predicted probabilities.
//!
//! The corrected standard error `sigma* / sqrt(n v)` describes null
//! coordinates. For non-null coordinates it is only a bulk heuristic.

pub mod chisq;

use std::path::Path;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, FitOptions, FitResult, NullTester};
use crate::prox::rho_prime;
use crate::state_evolution::SolutionTriple;

pub use chisq::{chisq_sf, gamma_p, gamma_q};

/// `beta_hat / alpha`.
pub fn debias(beta_hat: &ArrayView1<'_, f64>, alpha: f64) -> Result<Array1<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(beta_hat.mapv(|b| b / alpha))
}

/// `sigma* / sqrt(n v)` for a column with variance `v`.
pub fn corrected_se(triple: &SolutionTriple, n: usize, column_variance: f64) -> Result<f64> {
    if !(column_variance > 0.0 && column_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "column variance must be positive, got {column_variance}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    Ok(triple.sigma_star / (n as f64 * column_variance).sqrt())
}

/// Tail probability of `two_llr / factor` under `chi2_df`.
pub fn lrt_pvalue(two_llr: f64, factor: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("degrees of freedom must be at least 1".into()));
    }
    if !(two_llr >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "twice the log-likelihood ratio must be nonnegative, got {two_llr}"
        )));
    }
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("factor must be nonnegative, got {factor}")));
    }
    if two_llr == 0.0 {
        return Ok(1.0);
    }
    if factor == 0.0 {
        return Ok(0.0);
    }
    chisq_sf(two_llr / factor, df)
}

/// `rho'(x_new' beta_hat / alpha)`.
pub fn debiased_predict(x_new: &ArrayView1<'_, f64>, beta_hat: &ArrayView1<'_, f64>, alpha: f64) -> Result<f64> {
    if x_new.len() != beta_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_hat.len(),
            got: x_new.len(),
        });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(rho_prime(x_new.dot(beta_hat) / alpha))
}

/// Sample variance of each column (denominator `n - 1`).
pub fn column_variances(data: &Dataset) -> Array1<f64> {
    let n = data.n() as f64;
    data.x()
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect()
}

/// How column variances enter the corrected standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColumnVariance {
    /// Sample variance of each column.
    #[default]
    Estimated,
    /// Every column has variance `1/n`.
    UnitOverN,
}

/// Where the triple came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TripleSource {
    Theoretical { gamma: f64 },
    ProbeFrontier { gamma_hat: f64, kappa_hat: f64, replicates: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustOptions {
    pub column_variance: ColumnVariance,
    /// Coordinates to test; all when `None`.
    pub coordinates: Option<Vec<usize>>,
    pub fit: FitOptions,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        Self {
            column_variance: ColumnVariance::Estimated,
            coordinates: None,
            fit: FitOptions::default(),
        }
    }
}

/// Adjusted analysis of one dataset; serializes as the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedInference {
    #[serde(with = "crate::serde_vec")]
    pub beta_hat: Array1<f64>,
    #[serde(with = "crate::serde_vec")]
    pub beta_debiased: Array1<f64>,
    #[serde(with = "crate::serde_vec")]
    pub se_classical: Array1<f64>,
    #[serde(with = "crate::serde_vec")]
    pub se_corrected: Array1<f64>,
    #[serde(with = "crate::serde_vec")]
    pub column_variance: Array1<f64>,
    pub lrt_factor: f64,
    /// Tested coordinates, aligned with the statistic and p-value vectors.
    pub tested: Vec<usize>,
    pub two_llr: Vec<f64>,
    pub pvalues_classical: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub triple_used: SolutionTriple,
    pub provenance: TripleSource,
}

impl AdjustedInference {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Runs the full adjustment for a converged `fit` of `data`.
pub fn adjust(
    data: &Dataset,
    fit: &FitResult,
    triple: &SolutionTriple,
    provenance: TripleSource,
    opts: &AdjustOptions,
) -> Result<AdjustedInference> {
    let (n, p) = (data.n(), data.p());
    if !fit.converged || fit.beta_hat.len() != p {
        return Err(Error::InvalidArgument("adjustment needs a converged fit of these data".into()));
    }
    let tested = match &opts.coordinates {
        Some(c) => {
            if let Some(&j) = c.iter().find(|&&j| j >= p) {
                return Err(Error::InvalidArgument(format!("coordinate {j} out of range")));
            }
            c.clone()
        }
        None => (0..p).collect(),
    };
    let column_variance = match opts.column_variance {
        ColumnVariance::Estimated => column_variances(data),
        ColumnVariance::UnitOverN => Array1::from_elem(p, 1.0 / n as f64),
    };
    let se_corrected = column_variance
        .iter()
        .map(|&v| corrected_se(triple, n, v))
        .collect::<Result<Array1<f64>>>()?;
    let tester = NullTester::from_fit(data, fit.clone(), &opts.fit)?;
    let factor = triple.lrt_factor();
    let mut two_llr = Vec::with_capacity(tested.len());
    let mut pvalues_classical = Vec::with_capacity(tested.len());
    let mut pvalues = Vec::with_capacity(tested.len());
    for &j in &tested {
        let t = 2.0 * tester.llr(j)?;
        two_llr.push(t);
        pvalues_classical.push(lrt_pvalue(t, 1.0, 1)?);
        pvalues.push(lrt_pvalue(t, factor, 1)?);
    }
    Ok(AdjustedInference {
        beta_hat: fit.beta_hat.clone(),
        beta_debiased: debias(&fit.beta_hat.view(), triple.alpha_star)?,
        se_classical: tester.plugin_se(),
        se_corrected,
        column_variance,
        lrt_factor: factor,
        tested,
        two_llr,
        pvalues_classical,
        pvalues,
        triple_used: *triple,
        provenance,
    })
}
