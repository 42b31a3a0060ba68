use nalgebra::{DMatrix, DVector};

use super::{AffinityBundle, MatchError, Result};
use crate::qp::QpProblem;

/// Which marginals of `X` are pinned to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualitySide {
    /// n_d < n_t: every detection row sums to 1, tracklet columns ≤ 1.
    Rows,
    /// n_d > n_t: every tracklet column sums to 1, detection rows ≤ 1.
    Columns,
    /// Square: the Birkhoff polytope, both marginals equal 1.
    Both,
}

impl EqualitySide {
    pub fn for_shape(n_det: usize, n_trk: usize) -> Self {
        use std::cmp::Ordering::*;
        match n_det.cmp(&n_trk) {
            Less => Self::Rows,
            Greater => Self::Columns,
            Equal => Self::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingQp {
    pub problem: QpProblem,
    pub n_det: usize,
    pub n_trk: usize,
    pub rho: f64,
    pub side: EqualitySide,
}

impl MatchingQp {
    /// Row-major reshape of a primal vector into `X` (n_d × n_t).
    pub fn reshape(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_det, self.n_trk, x.as_slice())
    }
}

/// `(G, h, A, b)` for the relaxed assignment set of an n_d × n_t map
/// vectorized row-major (`k = i·n_t + j`).
pub fn matching_constraints(
    n_det: usize,
    n_trk: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>, EqualitySide) {
    let n = n_det * n_trk;
    // Row sums: I_{n_d} ⊗ 1ᵀ_{n_t}. Column sums: 1ᵀ_{n_d} ⊗ I_{n_t}.
    let rows = DMatrix::<f64>::identity(n_det, n_det).kronecker(&DMatrix::from_element(1, n_trk, 1.0));
    let cols = DMatrix::<f64>::from_element(1, n_det, 1.0).kronecker(&DMatrix::identity(n_trk, n_trk));
    let side = EqualitySide::for_shape(n_det, n_trk);
    let (eq, upper) = match side {
        EqualitySide::Rows => (rows, Some(cols)),
        EqualitySide::Columns => (cols, Some(rows)),
        EqualitySide::Both => {
            let mut both = DMatrix::zeros(n_det + n_trk, n);
            both.rows_mut(0, n_det).copy_from(&rows);
            both.rows_mut(n_det, n_trk).copy_from(&cols);
            (both, None)
        }
    };
    let n_upper = upper.as_ref().map_or(0, |u| u.nrows());
    let mut g = DMatrix::zeros(n_upper + n, n);
    let mut h = DVector::zeros(n_upper + n);
    if let Some(u) = upper {
        g.rows_mut(0, n_upper).copy_from(&u);
        h.rows_mut(0, n_upper).fill(1.0);
    }
    g.view_mut((n_upper, 0), (n, n))
        .copy_from(&(-DMatrix::<f64>::identity(n, n)));
    let b = DVector::from_element(eq.nrows(), 1.0);
    (g, h, eq, b, side)
}

/// `min ½xᵀQx + qᵀx` with `Q = 2(ρI − M)`, `q = −vec(B)` over the relaxed
/// assignment set.
pub fn matching_qp(vertex: &DMatrix<f64>, quadratic: &DMatrix<f64>) -> Result<MatchingQp> {
    let (n_det, n_trk) = vertex.shape();
    if n_det == 0 || n_trk == 0 {
        return Err(MatchError::EmptyGraph);
    }
    let n = n_det * n_trk;
    if quadratic.shape() != (n, n) {
        return Err(MatchError::DimensionMismatch(format!(
            "quadratic affinity is {}x{}, expected {n}x{n}",
            quadratic.nrows(),
            quadratic.ncols()
        )));
    }
    if !vertex.iter().chain(quadratic.iter()).all(|v| v.is_finite()) {
        return Err(MatchError::Qp(crate::qp::QpError::NonFinite));
    }
    let rho = (n_det.max(n_trk) as f64 - 1.0).powi(2);
    let m_sym = (quadratic + quadratic.transpose()) * 0.5;
    let quad = (DMatrix::identity(n, n) * rho - m_sym) * 2.0;
    let linear = -DVector::from_iterator(n, vertex.transpose().iter().copied());
    let (g, h, a, b, side) = matching_constraints(n_det, n_trk);
    let problem = QpProblem::new(quad, linear, g, h, a, b)?;
    Ok(MatchingQp {
        problem,
        n_det,
        n_trk,
        rho,
        side,
    })
}

pub fn assemble_matching_qp(bundle: &AffinityBundle) -> Result<MatchingQp> {
    matching_qp(&bundle.vertex, &bundle.quadratic)
}
