#![allow(dead_code)]

use gmtrack::qp::{active_set_oracle, backward_qp, solve_qp, QpGradients, QpProblem, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Strictly convex, strictly feasible random QP: `Q = LLᵀ + 0.1I`, and the
/// constraints are built around a random interior point.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> QpProblem {
    let l = gaussian_matrix(rng, n, n);
    let quad = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let linear = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-2.0..2.0)));
    let x0 = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
    let g = gaussian_matrix(rng, m, n);
    let h = &g * &x0 + DVector::from_iterator(m, (0..m).map(|_| rng.random_range(0.1..1.0)));
    let a = gaussian_matrix(rng, p, n);
    let b = &a * &x0;
    QpProblem::new(quad, linear, g, h, a, b).unwrap()
}

pub fn random_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=6);
    let p = rng.random_range(0..=2usize.min(n));
    (n, m, p)
}

/// Entrywise relative error with an absolute floor for entries near zero.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss_at(problem: &QpProblem, c: &DVector<f64>) -> f64 {
    c.dot(&active_set_oracle(problem).expect("oracle re-solve").x)
}

/// Max relative error between `backward_qp` and central differences of
/// `L = cᵀx*` over every problem datum, re-solving with the enumeration
/// oracle at each perturbation.
pub fn qp_gradient_check(problem: &QpProblem, c: &DVector<f64>, step: f64, floor: f64) -> f64 {
    let sol = solve_qp(problem, &SolverOptions::default()).unwrap();
    let grads: QpGradients = backward_qp(problem, &sol, c).unwrap();
    let mut worst = 0.0_f64;
    let n = problem.num_vars();

    let fd = |f: &dyn Fn(&mut QpProblem, f64)| -> f64 {
        let mut plus = problem.clone();
        f(&mut plus, step);
        let mut minus = problem.clone();
        f(&mut minus, -step);
        (loss_at(&plus, c) - loss_at(&minus, c)) / (2.0 * step)
    };

    for i in 0..n {
        for j in i..n {
            // Symmetric perturbation of Q touches (i, j) and (j, i).
            let num = fd(&|p: &mut QpProblem, e: f64| {
                p.quad[(i, j)] += e;
                if i != j {
                    p.quad[(j, i)] += e;
                }
            });
            let ana = if i == j {
                grads.d_quad[(i, i)]
            } else {
                grads.d_quad[(i, j)] + grads.d_quad[(j, i)]
            };
            worst = worst.max(rel_err(ana, num, floor));
        }
        let num = fd(&|p: &mut QpProblem, e: f64| p.linear[i] += e);
        worst = worst.max(rel_err(grads.d_linear[i], num, floor));
    }
    for r in 0..problem.num_ineq() {
        for j in 0..n {
            let num = fd(&|p: &mut QpProblem, e: f64| p.ineq_mat[(r, j)] += e);
            worst = worst.max(rel_err(grads.d_ineq_mat[(r, j)], num, floor));
        }
        let num = fd(&|p: &mut QpProblem, e: f64| p.ineq_rhs[r] += e);
        worst = worst.max(rel_err(grads.d_ineq_rhs[r], num, floor));
    }
    for r in 0..problem.num_eq() {
        for j in 0..n {
            let num = fd(&|p: &mut QpProblem, e: f64| p.eq_mat[(r, j)] += e);
            worst = worst.max(rel_err(grads.d_eq_mat[(r, j)], num, floor));
        }
        let num = fd(&|p: &mut QpProblem, e: f64| p.eq_rhs[r] += e);
        worst = worst.max(rel_err(grads.d_eq_rhs[r], num, floor));
    }
    worst
}

/// Random QP whose optimum is strictly complementary with margin `margin`.
pub fn strictly_complementary_qp(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, margin: f64) -> QpProblem {
    loop {
        let prob = random_qp(rng, n, m, p);
        let sol = solve_qp(&prob, &SolverOptions::default()).unwrap();
        if sol.is_strictly_complementary(&prob, margin) {
            return prob;
        }
    }
}
