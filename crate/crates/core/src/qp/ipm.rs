//! Mehrotra predictor-corrector primal-dual interior point method.

use nalgebra::{DMatrix, DVector};

use super::linalg::{independent_rows, lu_solve, min_eigenvalue, select_entries, select_rows};
use super::{kkt_residuals, norm_inf, QpError, QpProblem, QpSolution, Result, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Acceptance threshold on the KKT residual max-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest negative eigenvalue of `Q` (relative to `max(1, max|Qᵢⱼ|)`)
    /// that ridge repair may absorb before the problem is rejected.
    pub max_ridge: f64,
    /// Re-solve the equality-constrained KKT system on the detected active
    /// set after the interior point iterations.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            max_ridge: 1e-6,
            polish: true,
        }
    }
}

/// Solve a convex QP.
///
/// Preprocessing adds a ridge to `Q` when its smallest eigenvalue is not
/// positive, and drops equality rows that are linearly dependent on the
/// others. The returned multipliers satisfy the KKT conditions of the
/// (ridged) problem to within `opts.tol`.
pub fn solve_qp(problem: &QpProblem, opts: &SolverOptions) -> Result<QpSolution> {
    if !(opts.tol > 0.0) {
        return Err(QpError::InvalidOption(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let (work, ridge) = repair_convexity(problem, opts.max_ridge)?;
    let rows = independent_rows(&work.eq_mat, RANK_TOL);
    let eq_mat = select_rows(&work.eq_mat, &rows);
    let eq_rhs = select_entries(&work.eq_rhs, &rows);
    check_equality_consistency(&work, &eq_mat, &eq_rhs)?;

    let m = work.num_ineq();
    let (mut x, mut lam, mut nu_kept, iterations) = if m == 0 {
        let (x, y) = equality_qp(&work, &eq_mat, &eq_rhs)?;
        (x, DVector::zeros(0), y, 1)
    } else {
        let it = interior_point(&work, &eq_mat, &eq_rhs, opts)?;
        (it.x, it.z, it.y, it.iterations)
    };

    let expand = |nu_kept: &DVector<f64>| {
        let mut nu = DVector::zeros(work.num_eq());
        for (k, &r) in rows.iter().enumerate() {
            nu[r] = nu_kept[k];
        }
        nu
    };

    let mut residual = kkt_residuals(&work, &x, &lam, &expand(&nu_kept)).max();
    if opts.polish && m > 0 {
        if let Some((px, plam, pnu)) = polish(&work, &eq_mat, &eq_rhs, &x, &lam) {
            let pres = kkt_residuals(&work, &px, &plam, &expand(&pnu)).max();
            if pres <= residual {
                x = px;
                lam = plam;
                nu_kept = pnu;
                residual = pres;
            }
        }
    }

    if !(residual <= opts.tol) {
        let ineq = &work.ineq_mat * &x - &work.ineq_rhs;
        let primal = norm_inf(&(&work.eq_mat * &x - &work.eq_rhs)).max(ineq.iter().fold(0.0_f64, |a, v| a.max(*v)));
        if primal > 1e-6 {
            return Err(QpError::Infeasible(format!(
                "primal residual {primal:e} after {iterations} iterations"
            )));
        }
        return Err(QpError::IterationLimit { iterations, residual });
    }

    Ok(QpSolution {
        eq_dual: expand(&nu_kept),
        x,
        ineq_dual: lam,
        kkt_residual: residual,
        iterations,
        ridge,
    })
}

/// Ridge `ε = |λmin| + 1e-8` whenever `λmin(Q) ≤ 0`.
pub(crate) fn repair_convexity(problem: &QpProblem, max_ridge: f64) -> Result<(QpProblem, f64)> {
    if problem.num_vars() == 0 {
        return Ok((problem.clone(), 0.0));
    }
    let lmin = min_eigenvalue(&problem.quad);
    if lmin > 0.0 {
        return Ok((problem.clone(), 0.0));
    }
    let scale = problem.quad.amax().max(1.0);
    if -lmin > max_ridge * scale {
        return Err(QpError::NotConvex(lmin));
    }
    let ridge = lmin.abs() + 1e-8;
    log::debug!("convexity repair: λmin = {lmin:e}, ridge = {ridge:e}");
    Ok((problem.with_ridge(ridge), ridge))
}

fn check_equality_consistency(work: &QpProblem, eq_mat: &DMatrix<f64>, eq_rhs: &DVector<f64>) -> Result<()> {
    if work.num_eq() == eq_mat.nrows() {
        return Ok(());
    }
    // Minimum-norm solution of the kept rows must satisfy the dropped ones.
    let gram = eq_mat * eq_mat.transpose();
    let coeff = lu_solve(&gram, eq_rhs).ok_or(QpError::SingularKkt)?;
    let x0 = eq_mat.transpose() * coeff;
    let resid = norm_inf(&(&work.eq_mat * &x0 - &work.eq_rhs));
    if resid > 1e-8 * (1.0 + norm_inf(&work.eq_rhs)) {
        return Err(QpError::Infeasible(format!(
            "equality system inconsistent (residual {resid:e})"
        )));
    }
    Ok(())
}

fn kkt_block(top_left: &DMatrix<f64>, eq_mat: &DMatrix<f64>) -> DMatrix<f64> {
    let n = top_left.nrows();
    let p = eq_mat.nrows();
    let mut k = DMatrix::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(top_left);
    k.view_mut((0, n), (n, p)).copy_from(&eq_mat.transpose());
    k.view_mut((n, 0), (p, n)).copy_from(eq_mat);
    k
}

fn stack(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(top.len() + bottom.len());
    v.rows_mut(0, top.len()).copy_from(top);
    v.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    v
}

fn equality_qp(work: &QpProblem, eq_mat: &DMatrix<f64>, eq_rhs: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = work.num_vars();
    let k = kkt_block(&work.quad, eq_mat);
    let rhs = stack(&(-&work.linear), eq_rhs);
    let sol = match lu_solve(&k, &rhs) {
        Some(s) => s,
        None => {
            // Singular but possibly consistent: least-squares and verify.
            let s = k
                .clone()
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|_| QpError::SingularKkt)?;
            if norm_inf(&(&k * &s - &rhs)) > 1e-9 * (1.0 + norm_inf(&rhs)) {
                return Err(QpError::Infeasible("objective unbounded below".into()));
            }
            s
        }
    };
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, eq_mat.nrows()).into_owned()))
}

struct Iterate {
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
    iterations: usize,
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(1.0_f64, f64::min)
}

fn factor(k: DMatrix<f64>) -> Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = k.lu();
    lu.is_invertible().then_some(lu)
}

fn interior_point(
    work: &QpProblem,
    eq_mat: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Iterate> {
    let n = work.num_vars();
    let m = work.num_ineq();
    let p = eq_mat.nrows();
    let q = &work.quad;
    let g = &work.ineq_mat;
    let gt = g.transpose();
    let h = &work.ineq_rhs;

    // Initial point from the least-squares relaxation of the inequalities.
    let k0 = kkt_block(&(q + &gt * g), eq_mat);
    let rhs0 = stack(&(-&work.linear + &gt * h), eq_rhs);
    let sol0 = lu_solve(&k0, &rhs0)
        .or_else(|| k0.clone().svd(true, true).solve(&rhs0, 1e-12).ok())
        .ok_or(QpError::SingularKkt)?;
    let mut x = sol0.rows(0, n).into_owned();
    let mut y = sol0.rows(n, p).into_owned();
    let z_tilde = g * &x - h;
    let s_tilde = -&z_tilde;
    let shift = |v: &DVector<f64>| {
        let alpha = -v.min();
        if alpha < 0.0 {
            v.clone()
        } else {
            v.add_scalar(1.0 + alpha)
        }
    };
    let mut s = shift(&s_tilde);
    let mut z = shift(&z_tilde);

    let inner_tol = 0.1 * opts.tol;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        let rd = q * &x + &work.linear + &gt * &z + eq_mat.transpose() * &y;
        let rp = eq_mat * &x - eq_rhs;
        let ri = g * &x + &s - h;
        let gap = s.dot(&z);
        let mu = gap / m as f64;
        let obj = work.objective(&x);
        let worst_comp = s.component_mul(&z).max();
        if norm_inf(&rd) <= inner_tol
            && norm_inf(&rp) <= inner_tol
            && norm_inf(&ri) <= inner_tol
            && worst_comp <= inner_tol
            && gap <= inner_tol * (1.0 + obj.abs())
        {
            break;
        }
        if !x.iter().chain(z.iter()).chain(s.iter()).all(|v| v.is_finite()) {
            return Err(QpError::Infeasible("interior point iterates diverged".into()));
        }
        if norm_inf(&z) > 1e13 {
            return Err(QpError::Infeasible("dual iterates diverged".into()));
        }
        if norm_inf(&x) > 1e13 {
            return Err(QpError::Infeasible("primal iterates diverged (unbounded)".into()));
        }

        let w = z.component_div(&s);
        let mut hmat = q.clone();
        for r in 0..m {
            let wr = w[r];
            for a in 0..n {
                let ga = g[(r, a)] * wr;
                if ga == 0.0 {
                    continue;
                }
                for b in 0..n {
                    hmat[(a, b)] += ga * g[(r, b)];
                }
            }
        }
        let kmat = kkt_block(&hmat, eq_mat);
        let lu = match factor(kmat.clone()) {
            Some(lu) => lu,
            None => {
                let reg = 1e-12 * (1.0 + kmat.amax());
                let mut kr = kmat;
                for i in 0..n {
                    kr[(i, i)] += reg;
                }
                for i in n..n + p {
                    kr[(i, i)] -= reg;
                }
                factor(kr).ok_or(QpError::SingularKkt)?
            }
        };

        let direction = |rc: &DVector<f64>| -> Option<_> {
            let t = (rc + z.component_mul(&ri)).component_div(&s);
            let rhs = stack(&(-&rd - &gt * t), &(-&rp));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, p).into_owned();
            let ds = -&ri - g * &dx;
            let dz = (rc - z.component_mul(&ds)).component_div(&s);
            Some((dx, ds, dz, dy))
        };

        let rc_aff = -s.component_mul(&z);
        let (_, ds_a, dz_a, _) = direction(&rc_aff).ok_or(QpError::SingularKkt)?;
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / m as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        let rc = rc_aff - ds_a.component_mul(&dz_a) + DVector::from_element(m, sigma * mu);
        let (dx, ds, dz, dy) = direction(&rc).ok_or(QpError::SingularKkt)?;
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        if alpha < 1e-12 {
            iterations = it + 1;
            break;
        }
        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        y += &dy * alpha;
        iterations = it + 1;
    }
    Ok(Iterate { x, z, y, iterations })
}

/// Solve the KKT system with the constraints whose multiplier dominates
/// their slack treated as equalities.
fn polish(
    work: &QpProblem,
    eq_mat: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    x: &DVector<f64>,
    lam: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = work.num_vars();
    let m = work.num_ineq();
    let p = eq_mat.nrows();
    let slack = &work.ineq_rhs - &work.ineq_mat * x;
    let active: Vec<usize> = (0..m).filter(|&i| lam[i] > slack[i]).collect();
    let k_act = active.len();
    if k_act + p > n {
        return None;
    }
    let mut cmat = DMatrix::zeros(k_act + p, n);
    let mut d = DVector::zeros(k_act + p);
    for (r, &i) in active.iter().enumerate() {
        cmat.row_mut(r).copy_from(&work.ineq_mat.row(i));
        d[r] = work.ineq_rhs[i];
    }
    cmat.view_mut((k_act, 0), (p, n)).copy_from(eq_mat);
    d.rows_mut(k_act, p).copy_from(eq_rhs);

    let k = kkt_block(&work.quad, &cmat);
    let sol = lu_solve(&k, &stack(&(-&work.linear), &d))?;
    let px = sol.rows(0, n).into_owned();
    let mut plam = DVector::zeros(m);
    for (r, &i) in active.iter().enumerate() {
        plam[i] = sol[n + r];
    }
    if plam.iter().any(|l| *l < 0.0) {
        return None;
    }
    let pnu = sol.rows(n + k_act, p).into_owned();
    Some((px, plam, pnu))
}
