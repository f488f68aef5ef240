//! Dense kernels behind the fitting code. Public types stay `ndarray`; the
//! heavy products and factorizations run through `faer` on borrowed views.

use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Accum, Mat, MatRef, Par, Side};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const JITTER: f64 = 1e-10;

fn as_faer<'a>(x: &'a ArrayView2<'_, f64>) -> MatRef<'a, f64> {
    let (n, p) = x.dim();
    let slice = x.as_slice().expect("matrix must be in standard layout");
    MatRef::from_row_major_slice(slice, n, p)
}

/// `X b`.
pub fn matvec(x: &ArrayView2<'_, f64>, b: &ArrayView1<'_, f64>) -> Array1<f64> {
    if x.is_standard_layout() {
        let xm = as_faer(x);
        let bc = faer::ColRef::from_slice(b.as_slice().expect("contiguous vector"));
        let out = xm * bc;
        Array1::from_iter(out.iter().copied())
    } else {
        x.dot(b)
    }
}

/// `X' r`.
pub fn matvec_t(x: &ArrayView2<'_, f64>, r: &ArrayView1<'_, f64>) -> Array1<f64> {
    if x.is_standard_layout() {
        let xm = as_faer(x);
        let rc = faer::ColRef::from_slice(r.as_slice().expect("contiguous vector"));
        let out = xm.transpose() * rc;
        Array1::from_iter(out.iter().copied())
    } else {
        x.t().dot(r)
    }
}

/// Lower triangle of `X' diag(d) X`. The strict upper triangle is left at zero.
pub fn weighted_gram_lower(x: &ArrayView2<'_, f64>, d: &[f64]) -> Mat<f64> {
    let (n, p) = x.dim();
    debug_assert_eq!(d.len(), n);
    let mut w = Mat::<f64>::zeros(n, p);
    for (i, row) in x.outer_iter().enumerate() {
        let s = d[i].max(0.0).sqrt();
        for (j, v) in row.iter().enumerate() {
            w[(i, j)] = s * v;
        }
    }
    let mut h = Mat::<f64>::zeros(p, p);
    tri_matmul(
        h.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        w.transpose(),
        BlockStructure::Rectangular,
        w.as_ref(),
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    h
}

/// Full symmetric `X' diag(d) X` as an ndarray.
pub fn weighted_gram(x: &ArrayView2<'_, f64>, d: &[f64]) -> Array2<f64> {
    let h = weighted_gram_lower(x, d);
    let p = h.nrows();
    Array2::from_shape_fn((p, p), |(i, j)| if i >= j { h[(i, j)] } else { h[(j, i)] })
}

/// Cholesky factorization of a symmetric positive (semi)definite matrix
/// given by its lower triangle. Near-singular matrices get a growing
/// diagonal jitter starting at `1e-10` times the mean diagonal.
pub struct SpdFactor {
    llt: Llt<f64>,
    pub jitter: f64,
}

impl SpdFactor {
    pub fn new(lower: &Mat<f64>) -> Result<Self> {
        let p = lower.nrows();
        if p == 0 {
            return Err(Error::Singular);
        }
        if let Ok(llt) = Llt::new(lower.as_ref(), Side::Lower) {
            return Ok(Self { llt, jitter: 0.0 });
        }
        let scale = (0..p).map(|i| lower[(i, i)].abs()).sum::<f64>() / p as f64;
        let mut jitter = JITTER * scale.max(f64::MIN_POSITIVE);
        for _ in 0..12 {
            let mut m = lower.clone();
            for i in 0..p {
                m[(i, i)] += jitter;
            }
            if let Ok(llt) = Llt::new(m.as_ref(), Side::Lower) {
                return Ok(Self { llt, jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Singular)
    }

    pub fn solve(&self, rhs: &ArrayView1<'_, f64>) -> Array1<f64> {
        let mut b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        Array1::from_iter((0..rhs.len()).map(|i| b[(i, 0)]))
    }

    pub fn inverse(&self) -> Array2<f64> {
        let inv = self.llt.inverse();
        let p = inv.nrows();
        Array2::from_shape_fn((p, p), |(i, j)| inv[(i, j)])
    }
}

/// Converts a full symmetric ndarray matrix to a faer lower triangle.
pub fn lower_from_array(h: &ArrayView2<'_, f64>) -> Mat<f64> {
    let p = h.nrows();
    Mat::from_fn(p, p, |i, j| if i >= j { h[[i, j]] } else { 0.0 })
}
