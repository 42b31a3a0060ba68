//! Finite-difference checks of the analytic gradients, for the `gradcheck`
//! command.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{ForwardOptions, MatchNet, TrainSample};
use super::tape::Tape;
use super::{GcnConfig, Result, LOSS_CLAMP};
use crate::geometry::BBox;
use crate::qp::{backward_qp, solve_qp, QpProblem, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
}

/// `|a − f| / max(|a|, |f|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Random strictly convex QP built around a strictly feasible point.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> Result<QpProblem> {
    let l = gaussian(rng, n, n);
    let quad = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let linear = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let g = gaussian(rng, m, n);
    let h = &g * &x0 + DVector::from_fn(m, |_, _| rng.random_range(0.1..1.0));
    let a = gaussian(rng, p, n);
    let b = &a * &x0;
    Ok(QpProblem::new(quad, linear, g, h, a, b)?)
}

/// Worst relative error of `backward_qp` for `L = cᵀx*` over every datum.
pub fn qp_max_rel_error(problem: &QpProblem, c: &DVector<f64>, step: f64, floor: f64) -> Result<f64> {
    let opts = SolverOptions::default();
    let sol = solve_qp(problem, &opts)?;
    let g = backward_qp(problem, &sol, c)?;
    let loss = |p: &QpProblem| -> Result<f64> { Ok(c.dot(&solve_qp(p, &opts)?.x)) };
    let mut worst = 0.0f64;
    let mut probe = |edit: &dyn Fn(&mut QpProblem, f64), analytic: f64| -> Result<()> {
        let mut plus = problem.clone();
        edit(&mut plus, step);
        let mut minus = problem.clone();
        edit(&mut minus, -step);
        let num = (loss(&plus)? - loss(&minus)?) / (2.0 * step);
        worst = worst.max(rel_error(analytic, num, floor));
        Ok(())
    };
    let n = problem.num_vars();
    for i in 0..n {
        for j in i..n {
            let ana = if i == j {
                g.d_quad[(i, i)]
            } else {
                g.d_quad[(i, j)] + g.d_quad[(j, i)]
            };
            probe(
                &|p, e| {
                    p.quad[(i, j)] += e;
                    if i != j {
                        p.quad[(j, i)] += e;
                    }
                },
                ana,
            )?;
        }
        probe(&|p, e| p.linear[i] += e, g.d_linear[i])?;
    }
    for r in 0..problem.num_ineq() {
        for j in 0..n {
            probe(&|p, e| p.ineq_mat[(r, j)] += e, g.d_ineq_mat[(r, j)])?;
        }
        probe(&|p, e| p.ineq_rhs[r] += e, g.d_ineq_rhs[r])?;
    }
    for r in 0..problem.num_eq() {
        for j in 0..n {
            probe(&|p, e| p.eq_mat[(r, j)] += e, g.d_eq_mat[(r, j)])?;
        }
        probe(&|p, e| p.eq_rhs[r] += e, g.d_eq_rhs[r])?;
    }
    Ok(worst)
}

/// Random QPs with strict complementarity margin `1e-3`.
pub fn qp_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(0..=6);
        let p = rng.random_range(0..=2usize.min(n));
        let prob = random_qp(&mut rng, n, m, p)?;
        let sol = solve_qp(&prob, &SolverOptions::default())?;
        if !sol.is_strictly_complementary(&prob, 1e-3) {
            continue;
        }
        let c = gaussian(&mut rng, n, 1).column(0).into_owned();
        worst = worst.max(qp_max_rel_error(&prob, &c, 1e-5, 1e-6)?);
        done += 1;
    }
    Ok(SuiteReport {
        suite: "qp_backward",
        instances: count,
        max_rel_error: worst,
    })
}

/// Thresholds that keep finite differences away from kinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyMargins {
    pub complementarity: f64,
    pub relu: f64,
    /// Minimum distance, in log space, of every ŷ and 1 − ŷ from the clamp.
    pub clamp_log: f64,
    /// Some row must have its top two scores closer than this many τ.
    pub unsaturated_gap: f64,
}

impl Default for DegeneracyMargins {
    fn default() -> Self {
        Self {
            complementarity: 1e-4,
            relu: 1e-3,
            clamp_log: 0.5,
            unsaturated_gap: 5.0,
        }
    }
}

/// Whether the loss is smooth around this instance.
pub fn is_non_degenerate(
    net: &MatchNet,
    sample: &TrainSample,
    opts: &ForwardOptions,
    margins: &DegeneracyMargins,
) -> Result<bool> {
    let mut tape = Tape::new();
    let vars = net.forward(&mut tape, sample, opts)?;
    if tape.relu_margin() < margins.relu {
        return Ok(false);
    }
    for (qp, sol) in tape.qp_solutions() {
        if !sol.is_strictly_complementary(&qp.problem, margins.complementarity) {
            return Ok(false);
        }
    }
    let lc = LOSS_CLAMP.ln();
    let clamp_ok = tape.value(vars.sharpened).iter().all(|&p| {
        let near = |v: f64| v > 0.0 && (v.ln() - lc).abs() < margins.clamp_log;
        !near(p) && !near(1.0 - p)
    });
    if !clamp_ok {
        return Ok(false);
    }
    let x = tape.value(vars.scores);
    let unsaturated = x.row_iter().any(|row| {
        let mut v: Vec<f64> = row.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v.len() > 1 && v[0] - v[1] < margins.unsaturated_gap * opts.tau
    });
    Ok(unsaturated)
}

/// Random network and frame pair whose features share a common direction,
/// which keeps the relaxed scores of a row close together.
pub fn random_e2e_instance(
    rng: &mut ChaCha8Rng,
    n_det: usize,
    n_trk: usize,
    d_in: usize,
    hidden: usize,
    d_out: usize,
) -> Result<(MatchNet, TrainSample)> {
    let gcn = GcnConfig {
        use_geometry: rng.random_bool(0.5),
        num_layers: 1,
    };
    let net = MatchNet::init(rng, d_in, hidden, d_out, gcn);
    let base = DVector::from_fn(d_in, |_, _| rng.random_range(-1.0..1.0));
    let feature = |rng: &mut ChaCha8Rng| &base + DVector::from_fn(d_in, |_, _| rng.random_range(-0.3..0.3));
    let det: Vec<_> = (0..n_det).map(|_| feature(rng)).collect();
    let hist: Vec<Vec<_>> = (0..n_trk)
        .map(|_| {
            let len = rng.random_range(1..=3);
            (0..len).map(|_| feature(rng)).collect()
        })
        .collect();
    let boxes = |n: usize, rng: &mut ChaCha8Rng| -> Vec<BBox> {
        (0..n)
            .map(|_| BBox::new(rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 12.0, 24.0))
            .collect()
    };
    let det_boxes = boxes(n_det, rng);
    let trk_boxes = boxes(n_trk, rng);
    let mut perm: Vec<usize> = (0..n_trk).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let target = DMatrix::from_fn(n_det, n_trk, |i, j| if i < n_trk && perm[i] == j { 1.0 } else { 0.0 });
    let sample = TrainSample::new(&det, det_boxes, &hist, trk_boxes, target)?;
    Ok((net, sample))
}

/// Worst relative error of the analytic loss gradient over every network
/// parameter and every raw input feature.
pub fn e2e_max_rel_error(
    net: &MatchNet,
    sample: &TrainSample,
    opts: &ForwardOptions,
    step: f64,
    floor: f64,
) -> Result<f64> {
    let (_, grads) = net.loss_and_gradients(sample, opts)?;
    let mut worst = 0.0f64;
    for (k, g) in grads.params.iter().enumerate() {
        for i in 0..g.len() {
            let eval = |e: f64| -> Result<f64> {
                let mut n = net.clone();
                n.tensors_mut()[k][i] += e;
                n.loss(sample, opts)
            };
            let num = (eval(step)? - eval(-step)?) / (2.0 * step);
            worst = worst.max(rel_error(g.as_slice()[i], num, floor));
        }
    }
    for (which, g) in [(0, &grads.det_input), (1, &grads.trk_input)] {
        for i in 0..g.len() {
            let eval = |e: f64| -> Result<f64> {
                let mut s = sample.clone();
                let m = if which == 0 {
                    &mut s.det_features
                } else {
                    &mut s.trk_history
                };
                m.as_mut_slice()[i] += e;
                net.loss(&s, opts)
            };
            let num = (eval(step)? - eval(-step)?) / (2.0 * step);
            worst = worst.max(rel_error(g.as_slice()[i], num, floor));
        }
    }
    Ok(worst)
}

pub fn e2e_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = ForwardOptions::default();
    let margins = DegeneracyMargins::default();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let (net, sample) = random_e2e_instance(&mut rng, 3, 3, 6, 8, 5)?;
        if !is_non_degenerate(&net, &sample, &opts, &margins)? {
            continue;
        }
        worst = worst.max(e2e_max_rel_error(&net, &sample, &opts, 1e-5, 1e-6)?);
        done += 1;
    }
    Ok(SuiteReport {
        suite: "end_to_end",
        instances: count,
        max_rel_error: worst,
    })
}
