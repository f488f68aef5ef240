//! Perfect-separation detection.
//!
//! With signed rows `a_i = (2 y_i - 1) x_i`, the data are separated when
//! some `b` has `a_i'b > 0` for every `i`. The margin problem
//!
//! ```text
//! max s   s.t.  a_i'b >= s,  |b|_inf <= 1
//! ```
//!
//! is solved through its dual, `min |A'w|_1` over the probability simplex,
//! written in standard form with `A'w - u + v = 0`. That form has only
//! `p + 1` rows and an obvious feasible starting basis. The optimal
//! multipliers recover the primal direction `b`.
//!
//! [`check_separation`] first looks for a cheap certificate of either
//! outcome with Wolfe's minimum-norm-point algorithm on the convex hull of
//! the `a_i`: a direction `b` with `|b|_inf = 1` and `min a_i'b > 1e-8`
//! proves the LP optimum exceeds the threshold, and simplex weights `w`
//! with `|A'w|_1 <= 1e-8` prove it does not. Either certificate therefore
//! yields the LP's own verdict. When neither appears, the LP decides.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::lp::{self, Columns, LpStatus};
use crate::error::{Error, Result};

/// Margins at or below this count as not separated.
pub const MARGIN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub separated: bool,
    /// Optimal `s`.
    pub margin: f64,
    /// Maximizing `b`, scaled to `|b|_inf <= 1`.
    #[serde(with = "crate::serde_vec")]
    pub direction: Array1<f64>,
    pub pivots: usize,
}

/// Columns `[w_1..w_n | u_1..u_p | v_1..v_p]`; row 0 is `sum w = 1`.
struct DualColumns {
    a: Vec<f64>,
    n: usize,
    p: usize,
}

impl Columns for DualColumns {
    fn rows(&self) -> usize {
        self.p + 1
    }
    fn cols(&self) -> usize {
        self.n + 2 * self.p
    }
    fn column(&self, j: usize, out: &mut [f64]) {
        let p = self.p;
        if j < self.n {
            out[0] = 1.0;
            out[1..].copy_from_slice(&self.a[j * p..(j + 1) * p]);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            let k = j - self.n;
            if k < p {
                out[1 + k] = -1.0;
            } else {
                out[1 + k - p] = 1.0;
            }
        }
    }
    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        let p = self.p;
        if j < self.n {
            let row = &self.a[j * p..(j + 1) * p];
            y[0] + row.iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
        } else {
            let k = j - self.n;
            if k < p {
                -y[1 + k]
            } else {
                y[1 + k - p]
            }
        }
    }
}

/// Solves the margin problem.
pub fn separation_lp(data: &Dataset) -> Result<SeparationResult> {
    let (n, p) = (data.n(), data.p());
    if n == 0 {
        return Ok(SeparationResult {
            separated: true,
            margin: f64::INFINITY,
            direction: Array1::zeros(p),
            pivots: 0,
        });
    }
    if p == 0 {
        return Ok(SeparationResult {
            separated: false,
            margin: 0.0,
            direction: Array1::zeros(0),
            pivots: 0,
        });
    }
    let cols = DualColumns {
        a: signed_rows(data),
        n,
        p,
    };
    let mut cost = vec![0.0; n];
    cost.extend(std::iter::repeat_n(1.0, 2 * p));
    let mut rhs = vec![0.0; p + 1];
    rhs[0] = 1.0;
    // w_0 = 1 and one slack per coordinate absorbing a_0.
    let mut basis = Vec::with_capacity(p + 1);
    basis.push(0);
    for k in 0..p {
        basis.push(if cols.a[k] > 0.0 { n + k } else { n + p + k });
    }
    let sol = lp::solve_from_basis(&cols, &rhs, &cost, basis)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::InvalidArgument("separation LP is bounded below; solver reported otherwise".into()));
    }
    let direction: Array1<f64> = sol.duals[1..].iter().map(|&v| (-v).clamp(-1.0, 1.0)).collect();
    let margin = sol.objective.max(0.0);
    let separated = margin > MARGIN_TOL && {
        // Confirm on the data with the recovered direction.
        let worst = cols
            .a
            .chunks_exact(p)
            .map(|row| row.iter().zip(direction.iter()).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        worst > 0.0
    };
    Ok(SeparationResult {
        separated,
        margin,
        direction,
        pivots: sol.pivots,
    })
}

/// Whether some `b` has `x_i'b > 0` for every case and `< 0` for every control.
pub fn check_separation(data: &Dataset) -> Result<bool> {
    if data.n() == 0 || data.p() == 0 {
        return Ok(separation_lp(data)?.separated);
    }
    let a = signed_rows(data);
    match min_norm_certificate(&a, data.n(), data.p()) {
        Certificate::Separated { .. } => Ok(true),
        Certificate::NotSeparated { .. } => Ok(false),
        Certificate::Undecided => Ok(separation_lp(data)?.separated),
    }
}

fn signed_rows(data: &Dataset) -> Vec<f64> {
    let mut a = Vec::with_capacity(data.n() * data.p());
    for (row, &y) in data.x().outer_iter().zip(data.y().iter()) {
        let s = 2.0 * y - 1.0;
        a.extend(row.iter().map(|v| s * v));
    }
    a
}

/// Outcome of the minimum-norm-point search.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `min_i a_i'direction = margin > MARGIN_TOL` with `|direction|_inf = 1`.
    Separated { direction: Vec<f64>, margin: f64 },
    /// Simplex weights with `|A'w|_1 <= MARGIN_TOL`.
    NotSeparated { weights: Vec<(usize, f64)> },
    Undecided,
}

/// Cholesky factor of `G + 11'` for the points in the corral, where `G`
/// is their Gram matrix. The factor exists exactly when the points are
/// affinely independent.
struct Corral {
    idx: Vec<usize>,
    weights: Vec<f64>,
    l: Vec<f64>,
    stride: usize,
}

impl Corral {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.stride + j]
    }

    /// Appends a point given its inner products `m` with the corral and
    /// `m_self = |a|^2 + 1`. Fails on (numerical) affine dependence.
    fn push(&mut self, index: usize, m: &[f64], m_self: f64) -> bool {
        let k = self.len();
        let mut row = vec![0.0; k + 1];
        for i in 0..k {
            let r = &self.l[i * self.stride..i * self.stride + i];
            row[i] = (m[i] - dot(r, &row[..i])) / self.at(i, i);
        }
        let d2 = m_self - row[..k].iter().map(|v| v * v).sum::<f64>();
        if d2 <= 1e-12 * m_self {
            return false;
        }
        row[k] = d2.sqrt();
        self.l[k * self.stride..k * self.stride + k + 1].copy_from_slice(&row);
        self.idx.push(index);
        self.weights.push(0.0);
        true
    }

    /// Removes corral position `q`, restoring the triangular factor with
    /// Givens rotations.
    fn remove(&mut self, q: usize) {
        let k = self.len();
        let s = self.stride;
        for i in q..k - 1 {
            for j in 0..=i + 1 {
                self.l[i * s + j] = self.l[(i + 1) * s + j];
            }
        }
        for c in q..k - 1 {
            let a = self.l[c * s + c];
            let b = self.l[c * s + c + 1];
            let r = a.hypot(b);
            let (cs, sn) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
            for i in c..k - 1 {
                let u = self.l[i * s + c];
                let v = self.l[i * s + c + 1];
                self.l[i * s + c] = cs * u + sn * v;
                self.l[i * s + c + 1] = -sn * u + cs * v;
            }
            if self.l[c * s + c] < 0.0 {
                for i in c..k - 1 {
                    self.l[i * s + c] = -self.l[i * s + c];
                }
            }
        }
        self.idx.remove(q);
        self.weights.remove(q);
    }

    /// Affine weights of the minimum-norm point of the corral's affine hull.
    fn affine_minimizer(&self) -> Vec<f64> {
        let k = self.len();
        let mut z = vec![1.0; k];
        for i in 0..k {
            let r = &self.l[i * self.stride..i * self.stride + i];
            z[i] = (z[i] - dot(r, &z[..i])) / self.at(i, i);
        }
        for i in (0..k).rev() {
            z[i] /= self.at(i, i);
            let zi = z[i];
            let r = &self.l[i * self.stride..i * self.stride + i];
            for (zt, &lt) in z[..i].iter_mut().zip(r) {
                *zt -= lt * zi;
            }
        }
        let total: f64 = z.iter().sum();
        z.iter().map(|v| v / total).collect()
    }
}

fn row<'a>(a: &'a [f64], p: usize, i: usize) -> &'a [f64] {
    &a[i * p..(i + 1) * p]
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len().min(v.len());
    let (u, v) = (&u[..n], &v[..n]);
    let mut acc = [0.0f64; 8];
    let mut cu = u.chunks_exact(8);
    let mut cv = v.chunks_exact(8);
    for (a, b) in (&mut cu).zip(&mut cv) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    let tail: f64 = cu.remainder().iter().zip(cv.remainder()).map(|(a, b)| a * b).sum();
    acc.iter().sum::<f64>() + tail
}

/// Wolfe's minimum-norm-point iteration over a growing prefix of the rows
/// of `a` (row-major, `n x p`).
struct MinNorm<'a> {
    a: &'a [f64],
    p: usize,
    sq: Vec<f64>,
    scale: f64,
    corral: Corral,
    x: Vec<f64>,
    budget: usize,
}

impl<'a> MinNorm<'a> {
    fn new(a: &'a [f64], n: usize, p: usize, start: usize) -> Self {
        let sq: Vec<f64> = (0..n).map(|i| dot(row(a, p, i), row(a, p, i))).collect();
        let scale = sq.iter().fold(0.0f64, |m, &v| m.max(v)).max(f64::MIN_POSITIVE);
        let mut corral = Corral {
            idx: Vec::new(),
            weights: Vec::new(),
            l: vec![0.0; (p + 2) * (p + 2)],
            stride: p + 2,
        };
        corral.push(start, &[], sq[start] + 1.0);
        corral.weights[0] = 1.0;
        Self {
            a,
            p,
            x: row(a, p, start).to_vec(),
            sq,
            scale,
            corral,
            budget: 40 * (p + 1) + 200,
        }
    }

    fn row(&self, i: usize) -> &'a [f64] {
        row(self.a, self.p, i)
    }

    /// Iterates over rows `0..active` until a certificate appears.
    fn solve(&mut self, active: usize) -> Certificate {
        let p = self.p;
        let am = faer::MatRef::from_row_major_slice(&self.a[..active * p], active, p);
        while self.budget > 0 {
            self.budget -= 1;
            let v = am * faer::ColRef::from_slice(&self.x);
            let (j, min_v) = (0..active)
                .map(|i| (i, v[i]))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("active > 0");
            let xinf = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if xinf > 0.0 && min_v / xinf > MARGIN_TOL {
                return Certificate::Separated {
                    direction: self.x.iter().map(|v| v / xinf).collect(),
                    margin: min_v / xinf,
                };
            }
            let x1: f64 = self.x.iter().map(|v| v.abs()).sum();
            if x1 <= MARGIN_TOL {
                return Certificate::NotSeparated {
                    weights: self.corral.idx.iter().copied().zip(self.corral.weights.iter().copied()).collect(),
                };
            }
            let xx = dot(&self.x, &self.x);
            if xx - min_v <= 1e-12 * self.scale || self.corral.idx.contains(&j) {
                // Optimal (to rounding) without a usable certificate.
                return Certificate::Undecided;
            }
            let m: Vec<f64> = self.corral.idx.iter().map(|&i| dot(self.row(i), self.row(j)) + 1.0).collect();
            if !self.corral.push(j, &m, self.sq[j] + 1.0) {
                return Certificate::Undecided;
            }
            self.minor_cycles();
            self.x.iter_mut().for_each(|v| *v = 0.0);
            for (&i, &w) in self.corral.idx.iter().zip(&self.corral.weights) {
                for (xk, ak) in self.x.iter_mut().zip(row(self.a, p, i)) {
                    *xk += w * ak;
                }
            }
        }
        Certificate::Undecided
    }

    /// Moves toward the affine minimizer of the corral, dropping points,
    /// until that minimizer lies inside the corral's simplex.
    fn minor_cycles(&mut self) {
        let corral = &mut self.corral;
        loop {
            let mu = corral.affine_minimizer();
            if mu.iter().all(|&u| u > 1e-14) {
                corral.weights = mu;
                return;
            }
            let mut theta = 1.0f64;
            for (&lam, &u) in corral.weights.iter().zip(&mu) {
                if u <= 1e-14 && lam - u > 0.0 {
                    theta = theta.min(lam / (lam - u));
                }
            }
            let mut w: Vec<f64> = corral
                .weights
                .iter()
                .zip(&mu)
                .map(|(&lam, &u)| theta * u + (1.0 - theta) * lam)
                .collect();
            let drop = (0..w.len())
                .min_by(|&i, &k| w[i].total_cmp(&w[k]))
                .expect("corral is nonempty");
            w[drop] = 0.0;
            corral.weights = w;
            for q in (0..corral.len()).rev() {
                if corral.weights[q] <= 1e-14 {
                    corral.remove(q);
                }
            }
            let total: f64 = corral.weights.iter().sum();
            corral.weights.iter_mut().for_each(|v| *v /= total);
            if corral.len() <= 1 {
                return;
            }
        }
    }
}

/// Searches for a separation or non-separation certificate for the rows
/// of `a` (row-major, `n x p`).
pub fn min_norm_certificate(a: &[f64], n: usize, p: usize) -> Certificate {
    if n == 0 {
        return Certificate::Undecided;
    }
    let norms: Vec<f64> = (0..n).map(|i| dot(row(a, p, i), row(a, p, i))).collect();
    let start = (0..n).min_by(|&i, &j| norms[i].total_cmp(&norms[j])).expect("n > 0");
    MinNorm::new(a, n, p, start).solve(n)
}

/// Largest `k` such that the first `k` rows of `data` are separated.
///
/// Separation is monotone in the number of rows, so this one number
/// answers [`check_separation`] for every prefix: the first `m` rows are
/// separated exactly when `m <= k`. A single warm-started minimum-norm
/// run walks forward through the rows; exact LP checks settle any prefix
/// the certificates leave open.
pub fn separation_threshold(data: &Dataset) -> Result<usize> {
    separation_threshold_from(data, 1)
}

/// As [`separation_threshold`], with the walk starting at the first
/// `start` rows. A start past the threshold costs one extra solve.
pub fn separation_threshold_from(data: &Dataset, start: usize) -> Result<usize> {
    let (n, p) = (data.n(), data.p());
    if n == 0 || p == 0 {
        return Ok(0);
    }
    let a = signed_rows(data);
    let mut start = start.clamp(1, n);
    let (lo, hi) = 'walk: loop {
        let mut solver = MinNorm::new(&a, n, p, 0);
        // Prefixes of length <= known_sep are separated.
        let mut known_sep = 0;
        let mut active = start;
        loop {
            match solver.solve(active) {
                Certificate::Separated { direction, .. } => {
                    match (active..n).find(|&i| dot(row(&a, p, i), &direction) <= MARGIN_TOL) {
                        None => return Ok(n),
                        Some(i) => {
                            known_sep = i;
                            active = i + 1;
                        }
                    }
                }
                Certificate::NotSeparated { .. } if known_sep == 0 && active > 1 => {
                    start = 1;
                    continue 'walk;
                }
                Certificate::NotSeparated { .. } => return Ok(active - 1),
                Certificate::Undecided => break 'walk (known_sep, active),
            }
        }
    };
    // Exact checks: find a separated prefix `lo` and a non-separated `hi`,
    // then bisect.
    let prefix = |m: usize| -> Result<bool> {
        let rows: Vec<usize> = (0..m).collect();
        check_separation(&data.select_rows(&rows))
    };
    let (mut lo, mut hi) = if prefix(hi)? {
        if hi == n {
            return Ok(n);
        }
        (hi, n + 1)
    } else {
        (lo, hi)
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if prefix(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
