//! Estimating the signal strength from one dataset by locating the
//! dimensionality at which subsamples become separable half of the time.
//!
//! For grid points `kappa_j` ascending from `p / n`, subsamples of
//! `round(p / kappa_j)` rows are drawn and `pi(kappa_j)` is the fraction
//! that are separated. The first crossing of the threshold is linearly
//! interpolated to `kappa_hat`, and `gamma_hat = g_mle(kappa_hat)`.
//!
//! Two sampling schemes are available. [`Sampling::Nested`] (the default)
//! draws one random row order per replicate and uses its prefixes as the
//! subsamples at every grid point; each prefix is a uniform sample without
//! replacement, and because separation is monotone in the number of rows a
//! single threshold per replicate answers every grid point at once.
//! [`Sampling::Independent`] draws fresh subsamples for every grid point.

use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{check_separation, separation_threshold_from, Dataset};
use crate::phase_boundary::g_mle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Nested,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub grid_step: f64,
    /// Subsamples per grid point.
    pub replicates: usize,
    pub threshold: f64,
    pub seed: u64,
    pub sampling: Sampling,
    /// Scan at ten times the step, then refine inside the bracket.
    /// Only affects independent sampling.
    pub coarse_to_fine: bool,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            grid_step: 1e-3,
            replicates: 50,
            threshold: 0.5,
            seed: 0,
            sampling: Sampling::Nested,
            coarse_to_fine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFrontierResult {
    pub kappa_grid: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub kappa_hat: f64,
    pub gamma_hat: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

/// The JSON summary written next to the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub kappa_hat: f64,
    pub gamma_hat: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct CurveRow {
    kappa: f64,
    pi_hat: f64,
}

impl ProbeFrontierResult {
    pub fn summary(&self) -> ProbeSummary {
        ProbeSummary {
            kappa_hat: self.kappa_hat,
            gamma_hat: self.gamma_hat,
            b: self.b,
            seed: self.seed,
        }
    }

    /// Writes `kappa,pi_hat` rows.
    pub fn write_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        for (&kappa, &pi_hat) in self.kappa_grid.iter().zip(&self.pi_hat) {
            w.serialize(CurveRow { kappa, pi_hat })
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A uniform sample of `n_j` distinct rows.
pub fn subsample<R: Rng + ?Sized>(data: &Dataset, n_j: usize, rng: &mut R) -> Result<Dataset> {
    let (n, p) = (data.n(), data.p());
    if n_j <= p || n_j > n {
        return Err(Error::InvalidArgument(format!(
            "subsample size {n_j} must lie in ({p}, {n}]"
        )));
    }
    let rows = index::sample(rng, n, n_j).into_vec();
    Ok(data.select_rows(&rows))
}

/// Level crossing of the segment `(k0, p0) -> (k1, p1)`.
pub fn interpolate_crossing(k0: f64, p0: f64, k1: f64, p1: f64, level: f64) -> f64 {
    if p1 == p0 {
        return k1;
    }
    k0 + (level - p0) / (p1 - p0) * (k1 - k0)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const NESTED_STREAM: u64 = 1 << 63;

/// Subsample size for `kappa`.
fn size_for(p: usize, kappa: f64) -> usize {
    (p as f64 / kappa).round() as usize
}

struct Grid {
    base: f64,
    step: f64,
    len: usize,
}

impl Grid {
    fn new(base: f64, step: f64) -> Self {
        let len = ((0.5 - base) / step + 1e-9).floor() as usize + 1;
        Self { base, step, len }
    }

    fn kappa(&self, j: usize) -> f64 {
        self.base + j as f64 * self.step
    }
}

pub fn estimate_gamma(data: &Dataset, opts: &ProbeOptions) -> Result<ProbeFrontierResult> {
    let (n, p) = (data.n(), data.p());
    if p == 0 || n <= p {
        return Err(Error::InvalidArgument(format!("need 0 < p < n, got n={n}, p={p}")));
    }
    let kappa0 = p as f64 / n as f64;
    if kappa0 >= 0.5 {
        return Err(Error::InvalidArgument(format!(
            "p/n = {kappa0} must be below 1/2"
        )));
    }
    if !(opts.grid_step > 0.0 && opts.grid_step.is_finite()) || opts.replicates == 0 {
        return Err(Error::InvalidArgument(
            "grid step must be positive and B at least 1".into(),
        ));
    }
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1], got {}",
            opts.threshold
        )));
    }
    if check_separation(data)? {
        return Err(Error::FullDataSeparated);
    }
    let (kappa_grid, pi_hat) = match opts.sampling {
        Sampling::Nested => nested_curve(data, kappa0, opts)?,
        Sampling::Independent => independent_curve(data, kappa0, opts)?,
    };
    let last = pi_hat.len() - 1;
    if pi_hat[last] < opts.threshold {
        return Err(Error::FrontierNotReached {
            kappa_max: kappa_grid[last],
        });
    }
    let kappa_hat = if last == 0 {
        kappa_grid[0]
    } else {
        interpolate_crossing(
            kappa_grid[last - 1],
            pi_hat[last - 1],
            kappa_grid[last],
            pi_hat[last],
            opts.threshold,
        )
    };
    let gamma_hat = if kappa_hat >= 0.5 { 0.0 } else { g_mle(kappa_hat)? };
    Ok(ProbeFrontierResult {
        kappa_grid,
        pi_hat,
        kappa_hat,
        gamma_hat,
        b: opts.replicates,
        seed: opts.seed,
    })
}

/// Curve up to and including the first crossing, from nested prefixes.
fn nested_curve(data: &Dataset, kappa0: f64, opts: &ProbeOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, p) = (data.n(), data.p());
    let threshold_for = |b: usize, start: usize| -> Result<usize> {
        let mut rng = stream_rng(opts.seed, NESTED_STREAM | b as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        separation_threshold_from(&data.select_rows(&order), start)
    };
    // The first replicate seeds the starting prefix of the others; the
    // result does not depend on it.
    let first = threshold_for(0, 1)?;
    let start = (first * 9 / 10).max(1);
    let mut thresholds = vec![first];
    thresholds.extend(
        (1..opts.replicates)
            .into_par_iter()
            .map(|b| threshold_for(b, start))
            .collect::<Result<Vec<_>>>()?,
    );
    let grid = Grid::new(kappa0, opts.grid_step);
    let b = opts.replicates as f64;
    let mut kappas = Vec::new();
    let mut pis = Vec::new();
    for j in 0..grid.len {
        let kappa = grid.kappa(j);
        let n_j = size_for(p, kappa);
        let pi = thresholds.iter().filter(|&&t| n_j <= t).count() as f64 / b;
        kappas.push(kappa);
        pis.push(pi);
        if pi >= opts.threshold {
            break;
        }
    }
    Ok((kappas, pis))
}

/// Fraction of `B` fresh subsamples of size `n_j` that are separated.
fn separated_fraction(data: &Dataset, n_j: usize, stream: u64, opts: &ProbeOptions) -> Result<f64> {
    let b = opts.replicates;
    let hits = (0..b)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let mut rng = stream_rng(opts.seed, (stream << 20) | r as u64);
            check_separation(&subsample(data, n_j, &mut rng)?)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / b as f64)
}

fn independent_curve(data: &Dataset, kappa0: f64, opts: &ProbeOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = data.p();
    let fine = Grid::new(kappa0, opts.grid_step);
    let mut kappas = Vec::new();
    let mut pis = Vec::new();
    // Evaluates fine grid indices in `range` until the first crossing;
    // equal subsample sizes share one evaluation.
    let scan = |range: &mut dyn Iterator<Item = usize>,
                    kappas: &mut Vec<f64>,
                    pis: &mut Vec<f64>|
     -> Result<bool> {
        let mut last: Option<(usize, f64)> = None;
        for j in range {
            let kappa = fine.kappa(j);
            let n_j = size_for(p, kappa);
            let pi = match last {
                Some((m, pi)) if m == n_j => pi,
                _ => separated_fraction(data, n_j, j as u64, opts)?,
            };
            last = Some((n_j, pi));
            kappas.push(kappa);
            pis.push(pi);
            if pi >= opts.threshold {
                return Ok(true);
            }
        }
        Ok(false)
    };
    if !opts.coarse_to_fine {
        scan(&mut (0..fine.len), &mut kappas, &mut pis)?;
        return Ok((kappas, pis));
    }
    let stride = 10;
    let mut coarse = (0..fine.len).step_by(stride).chain(std::iter::once(fine.len - 1));
    let crossed = scan(&mut coarse, &mut kappas, &mut pis)?;
    if !crossed || kappas.len() == 1 {
        return Ok((kappas, pis));
    }
    // Refine strictly inside the bracketing coarse interval, keeping the
    // coarse endpoint as the fallback crossing.
    let hi_kappa = kappas.pop().expect("crossed");
    let hi_pi = pis.pop().expect("crossed");
    let lo_j = ((kappas[kappas.len() - 1] - kappa0) / opts.grid_step).round() as usize;
    let hi_j = ((hi_kappa - kappa0) / opts.grid_step).round() as usize;
    if !scan(&mut (lo_j + 1..hi_j), &mut kappas, &mut pis)? {
        kappas.push(hi_kappa);
        pis.push(hi_pi);
    }
    Ok((kappas, pis))
}
