//! Dense convex quadratic programming.
//!
//! Problems are held in the standard form
//!
//! ```text
//! minimize    ½ xᵀ Q x + qᵀ x
//! subject to  G x ≤ h
//!             A x = b
//! ```
//!
//! [`solve_qp`] runs a primal-dual interior point method, [`backward_qp`]
//! differentiates a scalar loss through the optimum by implicit
//! differentiation of the KKT system, and [`active_set_oracle`] is an
//! exhaustive reference solver for small problems.

mod backward;
mod ipm;
mod linalg;
mod oracle;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use backward::{backward_qp, QpGradients, DEGENERACY_TOL};
pub use ipm::{solve_qp, SolverOptions};
pub use linalg::independent_rows;
pub use oracle::active_set_oracle;

/// Symmetry tolerance applied when a problem is constructed.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Rank threshold used when eliminating redundant equality rows.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("quadratic cost is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("problem data contains non-finite values")]
    NonFinite,
    #[error("quadratic cost is not convex (min eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("iteration limit reached after {iterations} iterations (residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },
    #[error("KKT system is singular")]
    SingularKkt,
    #[error("solution is stale: KKT residual {0:e} above threshold")]
    StaleSolution(f64),
    #[error("problem too large for enumeration (n = {n}, m = {m})")]
    TooLarge { n: usize, m: usize },
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
}

pub type Result<T> = std::result::Result<T, QpError>;

/// A convex QP in standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Symmetric quadratic cost `Q` (n × n).
    pub quad: DMatrix<f64>,
    /// Linear cost `q` (n).
    pub linear: DVector<f64>,
    /// Inequality matrix `G` (m × n).
    pub ineq_mat: DMatrix<f64>,
    /// Inequality bound `h` (m).
    pub ineq_rhs: DVector<f64>,
    /// Equality matrix `A` (p × n).
    pub eq_mat: DMatrix<f64>,
    /// Equality bound `b` (p).
    pub eq_rhs: DVector<f64>,
}

impl QpProblem {
    /// Validate shapes and symmetry. `quad` is symmetrized exactly on success.
    pub fn new(
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        ineq_mat: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
        eq_mat: DMatrix<f64>,
        eq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let n = linear.len();
        if quad.nrows() != n || quad.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "Q is {}x{}, q has {} entries",
                quad.nrows(),
                quad.ncols(),
                n
            )));
        }
        if ineq_mat.ncols() != n || ineq_mat.nrows() != ineq_rhs.len() {
            return Err(QpError::DimensionMismatch(format!(
                "G is {}x{}, h has {} entries, n = {}",
                ineq_mat.nrows(),
                ineq_mat.ncols(),
                ineq_rhs.len(),
                n
            )));
        }
        if eq_mat.ncols() != n || eq_mat.nrows() != eq_rhs.len() {
            return Err(QpError::DimensionMismatch(format!(
                "A is {}x{}, b has {} entries, n = {}",
                eq_mat.nrows(),
                eq_mat.ncols(),
                eq_rhs.len(),
                n
            )));
        }
        let all_finite = quad.iter().all(|v| v.is_finite())
            && linear.iter().all(|v| v.is_finite())
            && ineq_mat.iter().all(|v| v.is_finite())
            && ineq_rhs.iter().all(|v| v.is_finite())
            && eq_mat.iter().all(|v| v.is_finite())
            && eq_rhs.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(QpError::NonFinite);
        }
        let asym = (&quad - quad.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(QpError::NotSymmetric(asym));
        }
        let quad = (&quad + quad.transpose()) * 0.5;
        Ok(Self {
            quad,
            linear,
            ineq_mat,
            ineq_rhs,
            eq_mat,
            eq_rhs,
        })
    }

    /// `min ½xᵀQx + qᵀx` with no constraints.
    pub fn unconstrained(quad: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = linear.len();
        Self::new(
            quad,
            linear,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    }

    /// Replace the inequality block.
    pub fn with_inequalities(self, ineq_mat: DMatrix<f64>, ineq_rhs: DVector<f64>) -> Result<Self> {
        Self::new(self.quad, self.linear, ineq_mat, ineq_rhs, self.eq_mat, self.eq_rhs)
    }

    /// Replace the equality block.
    pub fn with_equalities(self, eq_mat: DMatrix<f64>, eq_rhs: DVector<f64>) -> Result<Self> {
        Self::new(self.quad, self.linear, self.ineq_mat, self.ineq_rhs, eq_mat, eq_rhs)
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quad * x)) + self.linear.dot(x)
    }

    /// Copy of the problem with `ridge · I` added to the quadratic cost.
    pub fn with_ridge(&self, ridge: f64) -> QpProblem {
        let mut out = self.clone();
        if ridge != 0.0 {
            for i in 0..out.num_vars() {
                out.quad[(i, i)] += ridge;
            }
        }
        out
    }

    /// Scale the objective `(Q, q)` by `c`.
    pub fn scaled_objective(&self, c: f64) -> QpProblem {
        let mut out = self.clone();
        out.quad *= c;
        out.linear *= c;
        out
    }

    /// Plain-text dump of every matrix block, for bug reports.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

fn write_block(f: &mut fmt::Formatter<'_>, name: &str, m: &DMatrix<f64>) -> fmt::Result {
    writeln!(f, "{name} {} {}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.17e}", m[(r, c)])).collect();
        writeln!(f, "{}", row.join(" "))?;
    }
    Ok(())
}

impl fmt::Display for QpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# qp n={} m={} p={}",
            self.num_vars(),
            self.num_ineq(),
            self.num_eq()
        )?;
        write_block(f, "Q", &self.quad)?;
        write_block(
            f,
            "q",
            &DMatrix::from_column_slice(self.num_vars(), 1, self.linear.as_slice()),
        )?;
        write_block(f, "G", &self.ineq_mat)?;
        write_block(
            f,
            "h",
            &DMatrix::from_column_slice(self.num_ineq(), 1, self.ineq_rhs.as_slice()),
        )?;
        write_block(f, "A", &self.eq_mat)?;
        write_block(
            f,
            "b",
            &DMatrix::from_column_slice(self.num_eq(), 1, self.eq_rhs.as_slice()),
        )
    }
}

/// Primal/dual optimum with certificate data.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Primal optimum.
    pub x: DVector<f64>,
    /// Inequality multipliers `λ` (m).
    pub ineq_dual: DVector<f64>,
    /// Equality multipliers `ν` (p); zero on rows eliminated as redundant.
    pub eq_dual: DVector<f64>,
    /// Max-norm of the KKT residual families, see [`KktResiduals`].
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Ridge added to `Q` by convexity repair (zero when none was needed).
    pub ridge: f64,
}

impl QpSolution {
    /// Slack `h − Gx` of each inequality.
    pub fn slack(&self, problem: &QpProblem) -> DVector<f64> {
        &problem.ineq_rhs - &problem.ineq_mat * &self.x
    }

    /// True when every inequality has either its multiplier or its slack
    /// at least `margin`.
    pub fn is_strictly_complementary(&self, problem: &QpProblem, margin: f64) -> bool {
        let slack = self.slack(problem);
        self.ineq_dual
            .iter()
            .zip(slack.iter())
            .all(|(l, s)| *l >= margin || *s >= margin)
    }
}

/// Residual families of the KKT conditions at a candidate point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Qx + q + Gᵀλ + Aᵀν‖∞`
    pub stationarity: f64,
    /// `‖Ax − b‖∞`
    pub equality: f64,
    /// `max(0, max(Gx − h))`
    pub inequality: f64,
    /// `max |λᵢ (Gx − h)ᵢ|`
    pub complementarity: f64,
    /// `max(0, −min λ)`
    pub dual_sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.equality)
            .max(self.inequality)
            .max(self.complementarity)
            .max(self.dual_sign)
    }
}

pub fn kkt_residuals(
    problem: &QpProblem,
    x: &DVector<f64>,
    ineq_dual: &DVector<f64>,
    eq_dual: &DVector<f64>,
) -> KktResiduals {
    let stat = &problem.quad * x
        + &problem.linear
        + problem.ineq_mat.transpose() * ineq_dual
        + problem.eq_mat.transpose() * eq_dual;
    let eq = &problem.eq_mat * x - &problem.eq_rhs;
    let ineq = &problem.ineq_mat * x - &problem.ineq_rhs;
    let inequality = ineq.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let complementarity = ineq
        .iter()
        .zip(ineq_dual.iter())
        .fold(0.0_f64, |acc, (g, l)| acc.max((g * l).abs()));
    let dual_sign = ineq_dual.iter().fold(0.0_f64, |acc, l| acc.max(-*l));
    KktResiduals {
        stationarity: norm_inf(&stat),
        equality: norm_inf(&eq),
        inequality,
        complementarity,
        dual_sign,
    }
}

pub(crate) fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
