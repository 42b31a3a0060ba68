// Solve a small convex QP with the interior-point solver and compare it
// against the brute-force active-set oracle.
//
// ```text
// cargo run --example qp_solve
// ```

use gmtrack::qp::{active_set_oracle, kkt_residuals, solve_qp, QpProblem, SolverOptions};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn run() -> Result<(), Box<dyn std::error::Error>> {
    // min ½xᵀQx + qᵀx  s.t.  x ≥ 0, x₀ + x₁ + x₂ = 1
    let problem = QpProblem::new(
        dmatrix![2.0, 0.5, 0.0; 0.5, 1.0, 0.0; 0.0, 0.0, 3.0],
        dvector![-1.0, 0.5, -2.0],
        -DMatrix::identity(3, 3),
        DVector::zeros(3),
        dmatrix![1.0, 1.0, 1.0],
        dvector![1.0],
    )?;
    let sol = solve_qp(&problem, &SolverOptions::default())?;
    println!("x = {:.6}", sol.x.transpose());
    println!("lambda = {:.6}", sol.ineq_dual.transpose());
    println!("nu = {:.6}", sol.eq_dual.transpose());
    println!(
        "iterations = {}, kkt residual = {:.2e}",
        sol.iterations, sol.kkt_residual
    );

    let res = kkt_residuals(&problem, &sol.x, &sol.ineq_dual, &sol.eq_dual);
    println!(
        "stationarity {:.1e}, complementarity {:.1e}",
        res.stationarity, res.complementarity
    );

    let oracle = active_set_oracle(&problem)?;
    let gap = (&sol.x - &oracle.x).amax();
    println!("max |x - x_oracle| = {gap:.2e}");
    assert!(gap < 1e-6);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
