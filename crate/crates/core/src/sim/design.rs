use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::rho_prime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Gaussian,
    Snp,
}

/// How the coefficient vector is laid out before rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaPattern {
    /// First half `N(mean, var)`, second half zero.
    HalfNullGauss { mean: f64, var: f64 },
    /// The first `fraction * p` coordinates are `+-magnitude` with random
    /// signs; the rest are zero.
    SparsePm { magnitude: f64, fraction: f64 },
    /// Every coordinate `N(mean, var)`.
    IidGauss { mean: f64, var: f64 },
    /// First half equal to `value`, second half zero.
    HalfConst { value: f64 },
}

/// I.i.d. `N(0, 1/n)` entries.
pub fn gen_gaussian_design<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Array2<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    Array2::from_shape_simple_fn((n, p), || {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

/// `p` distinct allele frequencies drawn uniformly from `[0.25, 0.75]`.
pub fn snp_allele_frequencies<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(p);
    while out.len() < p {
        let f = rng.random_range(0.25..=0.75);
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Genotype counts in `{0, 1, 2}` under Hardy-Weinberg equilibrium, each
/// column centered and scaled to variance exactly `1/n`.
///
/// A column that comes out constant is redrawn.
pub fn gen_snp_design<R: Rng + ?Sized>(n: usize, p: usize, p_allele: &[f64], rng: &mut R) -> Result<Array2<f64>> {
    if p_allele.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: p_allele.len(),
        });
    }
    if let Some(f) = p_allele.iter().find(|f| !(0.25..=0.75).contains(*f)) {
        return Err(Error::InvalidArgument(format!(
            "allele frequency {f} outside [0.25, 0.75]"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two rows".into()));
    }
    let mut x = Array2::zeros((n, p));
    for (mut col, &f) in x.axis_iter_mut(Axis(1)).zip(p_allele) {
        let (c0, c1) = (f * f, f * f + 2.0 * f * (1.0 - f));
        loop {
            col.mapv_inplace(|_| {
                let u: f64 = rng.random();
                if u < c0 {
                    0.0
                } else if u < c1 {
                    1.0
                } else {
                    2.0
                }
            });
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var > 0.0 {
                let scale = 1.0 / (var * n as f64).sqrt();
                col.mapv_inplace(|v| (v - mean) * scale);
                break;
            }
        }
    }
    Ok(x)
}

/// Builds `beta` from `pattern`, then rescales it so that
/// `column_variance * |beta|^2 = gamma_target^2` when a target is given.
pub fn gen_beta<R: Rng + ?Sized>(
    pattern: &BetaPattern,
    p: usize,
    gamma_target: Option<f64>,
    column_variance: f64,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let half = p / 2;
    let normal = |mean: f64, var: f64| {
        Normal::new(mean, var.sqrt())
            .map_err(|e| Error::InvalidArgument(format!("bad normal parameters: {e}")))
    };
    let mut beta = match *pattern {
        BetaPattern::HalfNullGauss { mean, var } => {
            let d = normal(mean, var)?;
            Array1::from_shape_fn(p, |j| if j < half { d.sample(rng) } else { 0.0 })
        }
        BetaPattern::SparsePm { magnitude, fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
            }
            let k = (fraction * p as f64).round() as usize;
            Array1::from_shape_fn(p, |j| {
                if j >= k {
                    0.0
                } else if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            })
        }
        BetaPattern::IidGauss { mean, var } => {
            let d = normal(mean, var)?;
            Array1::from_shape_fn(p, |_| d.sample(rng))
        }
        BetaPattern::HalfConst { value } => Array1::from_shape_fn(p, |j| if j < half { value } else { 0.0 }),
    };
    if let Some(target) = gamma_target {
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma target must be nonnegative, got {target}")));
        }
        let current = (column_variance * beta.dot(&beta)).sqrt();
        if current == 0.0 {
            if target > 0.0 {
                return Err(Error::InvalidArgument(
                    "cannot rescale an all-zero coefficient vector to a positive signal".into(),
                ));
            }
        } else {
            beta *= target / current;
        }
    }
    Ok(beta)
}

/// Signal strength `sqrt(v |beta|^2)`.
pub fn signal_strength(beta: &Array1<f64>, column_variance: f64) -> f64 {
    (column_variance * beta.dot(beta)).sqrt()
}

/// Independent Bernoulli draws with success probability `rho'(x_i' beta)`.
pub fn gen_response<R: Rng + ?Sized>(x: &Array2<f64>, beta: &Array1<f64>, rng: &mut R) -> Result<Array1<f64>> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: beta.len(),
        });
    }
    let eta = crate::linalg::matvec(&x.view(), &beta.view());
    Ok(eta.mapv(|e| if rng.random::<f64>() < rho_prime(e) { 1.0 } else { 0.0 }))
}
