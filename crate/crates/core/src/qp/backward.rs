//! Gradients of a scalar loss through a QP optimum.
//!
//! With `g(x, λ, ν; θ) = [Qx + q + Gᵀλ + Aᵀν; diag(λ)(Gx − h); Ax − b] = 0`
//! at the optimum, `dx/dθ = −(∂g/∂(x,λ,ν))⁻¹ ∂g/∂θ`. Contracting with
//! `dL/dx` needs a single solve with the transposed Jacobian
//!
//! ```text
//! [ Q   Gᵀdiag(λ)   Aᵀ ] [wx]     [dL/dx]
//! [ G   diag(Gx−h)  0  ] [wλ] = − [  0  ]
//! [ A   0           0  ] [wν]     [  0  ]
//! ```
//!
//! after which every datum's gradient is an outer product of `w` with the
//! optimum.

use nalgebra::{DMatrix, DVector};

use super::linalg::{independent_rows, lu_solve, select_rows};
use super::{kkt_residuals, QpError, QpProblem, QpSolution, Result, RANK_TOL};

/// Residual above which a solution is not trusted for differentiation.
pub const STALE_RESIDUAL: f64 = 1e-6;

/// Multiplier and slack threshold below which a constraint is degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Diagonal perturbation applied to a degenerate Jacobian.
pub const DEGENERACY_SHIFT: f64 = 1e-10;

/// Gradients of a scalar loss with respect to every problem datum.
#[derive(Debug, Clone, PartialEq)]
pub struct QpGradients {
    pub d_quad: DMatrix<f64>,
    pub d_linear: DVector<f64>,
    pub d_ineq_mat: DMatrix<f64>,
    pub d_ineq_rhs: DVector<f64>,
    pub d_eq_mat: DMatrix<f64>,
    pub d_eq_rhs: DVector<f64>,
    /// Set when some constraint had both multiplier and slack below
    /// [`DEGENERACY_TOL`]; the gradients are then approximate.
    pub degenerate: bool,
}

pub fn backward_qp(problem: &QpProblem, solution: &QpSolution, dl_dx: &DVector<f64>) -> Result<QpGradients> {
    let n = problem.num_vars();
    let m = problem.num_ineq();
    if dl_dx.len() != n || solution.x.len() != n {
        return Err(QpError::DimensionMismatch(format!(
            "dL/dx has {} entries, x has {}, n = {n}",
            dl_dx.len(),
            solution.x.len()
        )));
    }
    let work = problem.with_ridge(solution.ridge);
    let residual = kkt_residuals(&work, &solution.x, &solution.ineq_dual, &solution.eq_dual).max();
    if !(residual <= STALE_RESIDUAL) {
        return Err(QpError::StaleSolution(residual));
    }

    let rows = independent_rows(&work.eq_mat, RANK_TOL);
    let a = select_rows(&work.eq_mat, &rows);
    let p = a.nrows();
    let x = &solution.x;
    let lam = &solution.ineq_dual;
    let g = &work.ineq_mat;
    let ineq = g * x - &work.ineq_rhs;

    let dim = n + m + p;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(&work.quad);
    for i in 0..m {
        for j in 0..n {
            k[(j, n + i)] = g[(i, j)] * lam[i];
            k[(n + i, j)] = g[(i, j)];
        }
        k[(n + i, n + i)] = ineq[i];
    }
    k.view_mut((0, n + m), (n, p)).copy_from(&a.transpose());
    k.view_mut((n + m, 0), (p, n)).copy_from(&a);

    let degenerate = (0..m).any(|i| lam[i].abs() < DEGENERACY_TOL && ineq[i].abs() < DEGENERACY_TOL);
    if degenerate {
        log::warn!("degenerate complementarity at QP optimum; perturbing KKT diagonal");
        for i in 0..dim {
            k[(i, i)] += DEGENERACY_SHIFT;
        }
    }

    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-dl_dx));
    let w = lu_solve(&k, &rhs).ok_or(QpError::SingularKkt)?;
    let wx = w.rows(0, n).into_owned();
    let wl = w.rows(n, m).into_owned();
    let wn = w.rows(n + m, p).into_owned();

    let d_quad = (&wx * x.transpose() + x * wx.transpose()) * 0.5;
    let d_linear = wx.clone();
    let lam_wl = lam.component_mul(&wl);
    let d_ineq_mat = lam * wx.transpose() + &lam_wl * x.transpose();
    let d_ineq_rhs = -lam_wl;

    let nu = &solution.eq_dual;
    let mut d_eq_mat = DMatrix::zeros(work.num_eq(), n);
    let mut d_eq_rhs = DVector::zeros(work.num_eq());
    for (kk, &r) in rows.iter().enumerate() {
        for j in 0..n {
            d_eq_mat[(r, j)] = nu[r] * wx[j] + wn[kk] * x[j];
        }
        d_eq_rhs[r] = -wn[kk];
    }

    let grads = QpGradients {
        d_quad,
        d_linear,
        d_ineq_mat,
        d_ineq_rhs,
        d_eq_mat,
        d_eq_rhs,
        degenerate,
    };
    let finite = grads.d_quad.iter().all(|v| v.is_finite())
        && grads.d_linear.iter().all(|v| v.is_finite())
        && grads.d_ineq_mat.iter().all(|v| v.is_finite())
        && grads.d_eq_mat.iter().all(|v| v.is_finite());
    if !finite {
        return Err(QpError::SingularKkt);
    }
    Ok(grads)
}
