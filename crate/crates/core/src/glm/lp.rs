//! Revised simplex for `min c'x  s.t.  A x = b, x >= 0`.
//!
//! The constraint matrix is reached only through [`Columns`], so callers
//! with structure (like the separation problem) can price columns without
//! materializing `A`. The basis inverse is kept explicitly and updated by
//! rank-one pivots, with periodic refactorization. Pricing is Dantzig's
//! rule over rotating blocks; after a run of degenerate pivots it switches
//! to Bland's rule until progress resumes.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use ndarray::Array2;

use crate::error::{Error, Result};

const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_RUN: usize = 50;

/// Column access to the constraint matrix.
pub trait Columns {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// Writes column `j` into `out`, which has length `rows()`.
    fn column(&self, j: usize, out: &mut [f64]);
    /// `a_j' y`.
    fn dot(&self, j: usize, y: &[f64]) -> f64;
}

/// A dense constraint matrix.
pub struct DenseColumns {
    a: Array2<f64>,
}

impl DenseColumns {
    pub fn new(a: Array2<f64>) -> Self {
        Self { a }
    }
}

impl Columns for DenseColumns {
    fn rows(&self) -> usize {
        self.a.nrows()
    }
    fn cols(&self) -> usize {
        self.a.ncols()
    }
    fn column(&self, j: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.a.column(j)) {
            *o = *v;
        }
    }
    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        self.a.column(j).iter().zip(y).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Primal solution over the original columns.
    pub x: Vec<f64>,
    /// Simplex multipliers `y = B^-T c_B`; reduced costs are `c - A'y`.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_pivots: usize,
}

impl SimplexOptions {
    fn for_size(m: usize, n: usize) -> Self {
        Self {
            max_pivots: 50 * (m + n) + 1000,
        }
    }
}

struct Simplex<'a, C: Columns> {
    cols: &'a C,
    m: usize,
    /// Index of the first artificial column (= number of real columns).
    n_real: usize,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    /// Sign applied to artificial columns so that the start is feasible.
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    y: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    cursor: usize,
    max_pivots: usize,
    col_buf: Vec<f64>,
    u: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl<'a, C: Columns> Simplex<'a, C> {
    fn column_into(&self, j: usize, out: &mut [f64]) {
        if j < self.n_real {
            self.cols.column(j, out);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.n_real] = self.art_sign[j - self.n_real];
        }
    }

    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n_real {
            self.cols.dot(j, y)
        } else {
            self.art_sign[j - self.n_real] * y[j - self.n_real]
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = Mat::<f64>::zeros(m, m);
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column_into(j, &mut col);
            for i in 0..m {
                b[(i, k)] = col[i];
            }
        }
        let inv = b.partial_piv_lu().inverse();
        for i in 0..m {
            for k in 0..m {
                let v = inv[(i, k)];
                if !v.is_finite() {
                    return Err(Error::Singular);
                }
                self.binv[i * m + k] = v;
            }
        }
        self.recompute_primal_dual();
        self.since_refactor = 0;
        Ok(())
    }

    fn recompute_primal_dual(&mut self) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        }
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let c = self.cost[self.basis[i]];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &r) in self.y.iter_mut().zip(row) {
                    *yk += c * r;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        self.cost[j] - self.dot(j, &self.y)
    }

    fn enterable(&self, j: usize) -> bool {
        j < self.n_real && !self.in_basis[j]
    }

    /// Dantzig pricing over blocks starting at the cursor.
    fn price_dantzig(&mut self) -> Option<(usize, f64)> {
        let total = self.n_real;
        if total == 0 {
            return None;
        }
        let block = self.m.max(256).min(total);
        let mut scanned = 0;
        while scanned < total {
            let mut best: Option<(usize, f64)> = None;
            let end = scanned + block;
            while scanned < end.min(total) {
                let j = (self.cursor + scanned) % total;
                scanned += 1;
                if !self.enterable(j) {
                    continue;
                }
                let d = self.reduced_cost(j);
                if d < -OPT_TOL && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            if let Some((j, d)) = best {
                self.cursor = (j + 1) % total;
                return Some((j, d));
            }
        }
        None
    }

    fn price_bland(&self) -> Option<(usize, f64)> {
        (0..self.n_real)
            .filter(|&j| self.enterable(j))
            .map(|j| (j, self.reduced_cost(j)))
            .find(|&(_, d)| d < -OPT_TOL)
    }

    fn ftran(&mut self, q: usize) {
        let m = self.m;
        let mut col = std::mem::take(&mut self.col_buf);
        self.column_into(q, &mut col);
        let nz: Vec<(usize, f64)> = col.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.u[i] = nz.iter().map(|&(k, v)| row[k] * v).sum();
        }
        self.col_buf = col;
    }

    fn ratio_test(&self, bland: bool) -> Option<usize> {
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if self.u[i] > PIVOT_TOL {
                    let r = self.xb[i].max(0.0) / self.u[i];
                    best = match best {
                        None => Some((i, r)),
                        Some((bi, br)) => {
                            if r < br - 1e-15 || (r <= br + 1e-15 && self.basis[i] < self.basis[bi]) {
                                Some((i, r))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            return best.map(|(i, _)| i);
        }
        // Harris two-pass: relax bounds by the feasibility tolerance, then
        // pick the largest pivot among the candidates.
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            if self.u[i] > PIVOT_TOL {
                theta = theta.min((self.xb[i].max(0.0) + FEAS_TOL) / self.u[i]);
            }
        }
        if !theta.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        for i in 0..self.m {
            if self.u[i] > PIVOT_TOL
                && self.xb[i].max(0.0) / self.u[i] <= theta
                && best.is_none_or(|b| self.u[i] > self.u[b])
            {
                best = Some(i);
            }
        }
        best
    }

    fn pivot(&mut self, q: usize, r: usize, d_q: f64) {
        let m = self.m;
        let piv = self.u[r];
        let theta = (self.xb[r].max(0.0) / piv).max(0.0);
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * self.u[i];
            }
        }
        self.xb[r] = theta;
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        row_r.iter_mut().for_each(|v| *v /= piv);
        for (i, row) in before.chunks_exact_mut(m).enumerate() {
            let f = self.u[i];
            if f != 0.0 {
                row.iter_mut().zip(row_r.iter()).for_each(|(a, b)| *a -= f * b);
            }
        }
        for (k, row) in after.chunks_exact_mut(m).enumerate() {
            let f = self.u[r + 1 + k];
            if f != 0.0 {
                row.iter_mut().zip(row_r.iter()).for_each(|(a, b)| *a -= f * b);
            }
        }
        for (yk, &b) in self.y.iter_mut().zip(row_r.iter()) {
            *yk += d_q * b;
        }
        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    fn iterate(&mut self, bland: &mut bool, degenerate: &mut usize) -> Result<Step> {
        if self.pivots >= self.max_pivots {
            return Err(Error::LpCycling(self.pivots));
        }
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        let entering = if *bland { self.price_bland() } else { self.price_dantzig() };
        let Some((q, d_q)) = entering else {
            if self.since_refactor > 0 {
                // Confirm optimality on fresh factors.
                self.refactor()?;
                return Ok(Step::Pivoted);
            }
            return Ok(Step::Optimal);
        };
        self.ftran(q);
        let Some(r) = self.ratio_test(*bland) else {
            return Ok(Step::Unbounded);
        };
        let theta = self.xb[r].max(0.0) / self.u[r];
        self.pivot(q, r, d_q);
        if theta * d_q.abs() < 1e-12 {
            *degenerate += 1;
            if *degenerate >= DEGENERATE_RUN {
                *bland = true;
            }
        } else {
            *degenerate = 0;
            *bland = false;
        }
        Ok(Step::Pivoted)
    }

    fn run(&mut self) -> Result<Step> {
        let mut bland = false;
        let mut degenerate = 0;
        loop {
            match self.iterate(&mut bland, &mut degenerate)? {
                Step::Pivoted => continue,
                other => return Ok(other),
            }
        }
    }

    fn objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&j, &v)| self.cost[j] * v)
            .sum()
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let mut x = vec![0.0; self.n_real];
        for (&j, &v) in self.basis.iter().zip(&self.xb) {
            if j < self.n_real {
                x[j] = v.max(0.0);
            }
        }
        LpSolution {
            status,
            objective: self.objective(),
            x,
            duals: self.y.clone(),
            pivots: self.pivots,
        }
    }
}

fn validate<C: Columns>(cols: &C, rhs: &[f64], cost: &[f64]) -> Result<()> {
    if rhs.len() != cols.rows() {
        return Err(Error::DimensionMismatch {
            expected: cols.rows(),
            got: rhs.len(),
        });
    }
    if cost.len() != cols.cols() {
        return Err(Error::DimensionMismatch {
            expected: cols.cols(),
            got: cost.len(),
        });
    }
    Ok(())
}

fn new_simplex<'a, C: Columns>(
    cols: &'a C,
    rhs: &[f64],
    cost: Vec<f64>,
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    opts: SimplexOptions,
) -> Simplex<'a, C> {
    let m = cols.rows();
    let n_real = cols.cols();
    let mut in_basis = vec![false; n_real + m];
    for &j in &basis {
        in_basis[j] = true;
    }
    Simplex {
        cols,
        m,
        n_real,
        cost,
        rhs: rhs.to_vec(),
        art_sign,
        basis,
        in_basis,
        binv: vec![0.0; m * m],
        xb: vec![0.0; m],
        y: vec![0.0; m],
        pivots: 0,
        since_refactor: 0,
        cursor: 0,
        max_pivots: opts.max_pivots,
        col_buf: vec![0.0; m],
        u: vec![0.0; m],
    }
}

/// Phase two only, from a caller-supplied feasible basis.
pub fn solve_from_basis<C: Columns>(
    cols: &C,
    rhs: &[f64],
    cost: &[f64],
    basis: Vec<usize>,
) -> Result<LpSolution> {
    validate(cols, rhs, cost)?;
    let m = cols.rows();
    if basis.len() != m || basis.iter().any(|&j| j >= cols.cols()) {
        return Err(Error::InvalidArgument("starting basis must hold one column per row".into()));
    }
    let mut full_cost = cost.to_vec();
    full_cost.extend(std::iter::repeat_n(0.0, m));
    let opts = SimplexOptions::for_size(m, cols.cols());
    let mut s = new_simplex(cols, rhs, full_cost, vec![1.0; m], basis, opts);
    s.refactor()?;
    if s.xb.iter().any(|&v| v < -1e-7) {
        return Err(Error::InvalidArgument("starting basis is not primal feasible".into()));
    }
    Ok(match s.run()? {
        Step::Unbounded => s.solution(LpStatus::Unbounded),
        _ => s.solution(LpStatus::Optimal),
    })
}

/// Two-phase simplex: artificial variables find a feasible basis, then
/// the original objective is minimized from it.
pub fn solve<C: Columns>(cols: &C, rhs: &[f64], cost: &[f64]) -> Result<LpSolution> {
    validate(cols, rhs, cost)?;
    let m = cols.rows();
    let n = cols.cols();
    let opts = SimplexOptions::for_size(m, n);
    let art_sign: Vec<f64> = rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut phase1 = vec![0.0; n];
    phase1.extend(std::iter::repeat_n(1.0, m));
    let basis: Vec<usize> = (n..n + m).collect();
    let mut s = new_simplex(cols, rhs, phase1, art_sign, basis, opts);
    s.refactor()?;
    s.run()?;
    let scale = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    if s.objective() > 1e-8 * scale {
        return Ok(s.solution(LpStatus::Infeasible));
    }
    // Drive zero-level artificials out of the basis where possible; those
    // that stay mark redundant rows and remain at zero.
    let mut row = vec![0.0; m];
    for r in 0..m {
        if s.basis[r] < n {
            continue;
        }
        row.copy_from_slice(&s.binv[r * m..(r + 1) * m]);
        let found = (0..n)
            .filter(|&j| !s.in_basis[j])
            .map(|j| (j, s.cols.dot(j, &row)))
            .find(|&(_, v)| v.abs() > 1e-7);
        if let Some((j, _)) = found {
            s.ftran(j);
            let d = 0.0;
            s.pivot(j, r, d);
        }
    }
    s.cost = cost.to_vec();
    s.cost.extend(std::iter::repeat_n(0.0, m));
    s.refactor()?;
    Ok(match s.run()? {
        Step::Unbounded => s.solution(LpStatus::Unbounded),
        _ => s.solution(LpStatus::Optimal),
    })
}
