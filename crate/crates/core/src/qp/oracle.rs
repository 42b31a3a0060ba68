//! Exhaustive active-set reference solver.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residuals, QpError, QpProblem, QpSolution, Result};

pub const ORACLE_MAX_VARS: usize = 12;
pub const ORACLE_MAX_INEQ: usize = 16;

const FEAS_TOL: f64 = 1e-9;

/// Solve by enumerating every subset of active inequalities.
///
/// For each subset the equality-constrained KKT system is solved with an SVD
/// pseudo-inverse, and the feasible candidate with nonnegative multipliers
/// and the smallest objective is returned. `iterations` reports the number of
/// subsets examined.
pub fn active_set_oracle(problem: &QpProblem) -> Result<QpSolution> {
    let n = problem.num_vars();
    let m = problem.num_ineq();
    let p = problem.num_eq();
    if n > ORACLE_MAX_VARS || m > ORACLE_MAX_INEQ {
        return Err(QpError::TooLarge { n, m });
    }
    let mut best: Option<(f64, QpSolution)> = None;
    let mut examined = 0;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = p + active.len();
        if k > n {
            continue;
        }
        examined += 1;
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.quad);
        rhs.rows_mut(0, n).copy_from(&(-&problem.linear));
        for r in 0..k {
            let (row, bound) = if r < p {
                (problem.eq_mat.row(r).into_owned(), problem.eq_rhs[r])
            } else {
                let i = active[r - p];
                (problem.ineq_mat.row(i).into_owned(), problem.ineq_rhs[i])
            };
            for c in 0..n {
                kkt[(n + r, c)] = row[c];
                kkt[(c, n + r)] = row[c];
            }
            rhs[n + r] = bound;
        }
        let Ok(sol) = kkt.clone().svd(true, true).solve(&rhs, 1e-13) else {
            continue;
        };
        let scale = 1.0 + rhs.amax();
        if (&kkt * &sol - &rhs).amax() > 1e-9 * scale {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let eq_dual = sol.rows(n, p).into_owned();
        let mut ineq_dual = DVector::zeros(m);
        for (r, &i) in active.iter().enumerate() {
            ineq_dual[i] = sol[n + p + r];
        }
        if ineq_dual.iter().any(|l| *l < -FEAS_TOL) {
            continue;
        }
        let slack_ok = (&problem.ineq_mat * &x - &problem.ineq_rhs)
            .iter()
            .all(|v| *v <= FEAS_TOL * scale);
        if !slack_ok {
            continue;
        }
        let obj = problem.objective(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12 * (1.0 + b.abs())) {
            let kkt_residual = kkt_residuals(problem, &x, &ineq_dual, &eq_dual).max();
            best = Some((
                obj,
                QpSolution {
                    x,
                    ineq_dual,
                    eq_dual,
                    kkt_residual,
                    iterations: 0,
                    ridge: 0.0,
                },
            ));
        }
    }
    match best {
        Some((_, mut sol)) => {
            sol.iterations = examined;
            Ok(sol)
        }
        None => Err(QpError::Infeasible("no feasible active set".into())),
    }
}
