// Differentiate a QP solution with respect to its data and check one
// gradient against central finite differences.
//
// ```text
// cargo run --example qp_backward
// ```

use gmtrack::qp::{backward_qp, solve_qp, QpProblem, SolverOptions};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn loss(problem: &QpProblem, c: &DVector<f64>) -> f64 {
    c.dot(&solve_qp(problem, &SolverOptions::default()).unwrap().x)
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let problem = QpProblem::new(
        dmatrix![3.0, 1.0, 0.0; 1.0, 2.0, 0.5; 0.0, 0.5, 1.5],
        dvector![-2.0, -1.0, 3.0],
        -DMatrix::identity(3, 3),
        DVector::zeros(3),
        dmatrix![1.0, 1.0, 1.0],
        dvector![1.0],
    )?;
    let sol = solve_qp(&problem, &SolverOptions::default())?;
    // L = cᵀx*
    let c = dvector![1.0, -0.5, 2.0];
    let g = backward_qp(&problem, &sol, &c)?;
    println!("x* = {:?}", sol.x.as_slice());
    println!("dL/dq = {:?}", g.d_linear.as_slice());
    println!("dL/db = {:?}", g.d_eq_rhs.as_slice());
    println!("degenerate = {}", g.degenerate);

    let h = 1e-6;
    for k in 0..3 {
        let mut plus = problem.clone();
        let mut minus = problem.clone();
        plus.linear[k] += h;
        minus.linear[k] -= h;
        let fd = (loss(&plus, &c) - loss(&minus, &c)) / (2.0 * h);
        println!("q[{k}]: analytic {:+.6}  finite difference {:+.6}", g.d_linear[k], fd);
        assert!((fd - g.d_linear[k]).abs() < 1e-4);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
