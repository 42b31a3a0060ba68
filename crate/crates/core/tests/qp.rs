mod common;

use common::*;
use gmtrack::qp::{active_set_oracle, kkt_residuals, solve_qp, QpProblem, SolverOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn interior_point_matches_enumeration_oracle() {
    let mut r = rng(11);
    for _ in 0..200 {
        let (n, m, p) = random_dims(&mut r);
        let prob = random_qp(&mut r, n, m, p);
        let ip = solve_qp(&prob, &SolverOptions::default()).unwrap();
        let or = active_set_oracle(&prob).unwrap();
        assert!((&ip.x - &or.x).amax() <= 1e-5, "{}\n{}", prob.dump(), ip.x);
        assert!(ip.kkt_residual <= 1e-8);
    }
}

#[test]
fn accepted_solutions_certify_all_residual_families() {
    let mut r = rng(12);
    for _ in 0..100 {
        let (n, m, p) = random_dims(&mut r);
        let prob = random_qp(&mut r, n, m, p);
        let s = solve_qp(&prob, &SolverOptions::default()).unwrap();
        let res = kkt_residuals(&prob, &s.x, &s.ineq_dual, &s.eq_dual);
        let tol = 1e-8;
        assert!(res.stationarity <= tol);
        assert!(res.equality <= tol);
        assert!(res.inequality <= tol);
        assert!(res.complementarity <= 1e-7);
        assert!(s.ineq_dual.iter().all(|l| *l >= -1e-8));
        let gap = s.ineq_dual.dot(&s.slack(&prob));
        assert!(gap.abs() <= 10.0 * tol * (1.0 + prob.objective(&s.x).abs()));
    }
}

#[test]
fn backward_matches_finite_differences_small_instance() {
    // n = 5, m = 3, p = 1, strictly feasible and strictly complementary.
    let mut r = rng(5);
    let prob = strictly_complementary_qp(&mut r, 5, 3, 1, 1e-3);
    let c = gaussian_matrix(&mut r, 5, 1).column(0).into_owned();
    let err = qp_gradient_check(&prob, &c, 1e-5, 1e-6);
    assert!(err <= 1e-4, "max relative error {err:e}");
}

#[test]
fn backward_matches_finite_differences_random() {
    let mut r = rng(21);
    for _ in 0..20 {
        let (n, m, p) = random_dims(&mut r);
        let prob = strictly_complementary_qp(&mut r, n, m, p, 1e-3);
        let c = gaussian_matrix(&mut r, n, 1).column(0).into_owned();
        let err = qp_gradient_check(&prob, &c, 1e-5, 1e-6);
        assert!(err <= 1e-3, "max relative error {err:e}\n{}", prob.dump());
    }
}

#[test]
fn simplex_projection_via_interior_point() {
    let prob = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::from_column_slice(&[-2.0, 0.0]))
        .unwrap()
        .with_equalities(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
        )
        .unwrap()
        .with_inequalities(-DMatrix::identity(2, 2), DVector::zeros(2))
        .unwrap();
    let s = solve_qp(&prob, &SolverOptions::default()).unwrap();
    assert!((s.x - DVector::from_column_slice(&[1.0, 0.0])).amax() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_scaling_leaves_argmin(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let (n, m, p) = random_dims(&mut r);
        let prob = random_qp(&mut r, n, m, p);
        let a = solve_qp(&prob, &SolverOptions::default()).unwrap();
        let b = solve_qp(&prob.scaled_objective(c), &SolverOptions::default()).unwrap();
        prop_assert!((&a.x - &b.x).amax() <= 1e-7);
    }
}

#[test]
fn interior_point_converges_without_polish() {
    let opts = SolverOptions {
        polish: false,
        ..SolverOptions::default()
    };
    let mut r = rng(13);
    for _ in 0..200 {
        let (n, m, p) = random_dims(&mut r);
        let prob = random_qp(&mut r, n, m, p);
        let ip = solve_qp(&prob, &opts).unwrap();
        let or = active_set_oracle(&prob).unwrap();
        assert!((&ip.x - &or.x).amax() <= 1e-5);
        assert!(ip.iterations < opts.max_iter);
    }
}
