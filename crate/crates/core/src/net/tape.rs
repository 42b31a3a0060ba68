//! Reverse-mode differentiation over dense matrices.
//!
//! Only the primitives the matching pipeline needs are recorded. Every node
//! keeps its forward value; `backward` walks the tape once in reverse,
//! accumulating adjoints additively at fan-out.

use nalgebra::{DMatrix, DVector};

use crate::matching::{gather_edge_gradient, scatter_edge_affinity, MatchingQp};
use crate::qp::{backward_qp, QpSolution};

use super::loss::{row_softmax, LOSS_CLAMP};
use super::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// `W x + b 1ᵀ`.
    Affine {
        w: Var,
        x: Var,
        b: Var,
    },
    Relu(Var),
    NormalizeColumns(Var),
    ColumnNorms(Var),
    /// Column `c` of `a` times `s[c]`, `s` is 1 × n.
    ScaleColumns(Var, Var),
    VStack(Var, Var),
    Expand {
        edge: Var,
        edges_det: Vec<(usize, usize)>,
        edges_trk: Vec<(usize, usize)>,
        n_trk: usize,
    },
    MatchQp {
        vertex: Var,
        quadratic: Var,
        qp: Box<MatchingQp>,
        solution: Box<QpSolution>,
        detached: bool,
    },
    /// Column vector to row-major `rows × cols`.
    Reshape(Var),
    RowSoftmax {
        a: Var,
        tau: f64,
    },
    WeightedBce {
        yhat: Var,
        target: DMatrix<f64>,
        k: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: DMatrix<f64>,
    op: Op,
}

/// Degeneracy report from QP nodes recorded on the tape.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QpNodeStats {
    pub count: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Var {
        let mut v = self.value(w) * self.value(x);
        let bias = self.value(b).column(0).into_owned();
        for mut c in v.column_iter_mut() {
            c += &bias;
        }
        self.push(v, Op::Affine { w, x, b })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Unit columns; an all-zero column stays zero.
    pub fn normalize_columns(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut c in v.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        self.push(v, Op::NormalizeColumns(a))
    }

    pub fn column_norms(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = DMatrix::from_fn(1, x.ncols(), |_, c| x.column(c).norm());
        self.push(v, Op::ColumnNorms(a))
    }

    pub fn scale_columns(&mut self, a: Var, s: Var) -> Var {
        let mut v = self.value(a).clone();
        let sv = self.value(s);
        for (c, mut col) in v.column_iter_mut().enumerate() {
            col *= sv[(0, c)];
        }
        self.push(v, Op::ScaleColumns(a, s))
    }

    pub fn vstack(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let mut v = DMatrix::zeros(x.nrows() + y.nrows(), x.ncols());
        v.rows_mut(0, x.nrows()).copy_from(x);
        v.rows_mut(x.nrows(), y.nrows()).copy_from(y);
        self.push(v, Op::VStack(a, b))
    }

    pub fn expand(
        &mut self,
        edge: Var,
        edges_det: Vec<(usize, usize)>,
        edges_trk: Vec<(usize, usize)>,
        n_det: usize,
        n_trk: usize,
    ) -> Var {
        let v = scatter_edge_affinity(self.value(edge), &edges_det, &edges_trk, n_det, n_trk);
        self.push(
            v,
            Op::Expand {
                edge,
                edges_det,
                edges_trk,
                n_trk,
            },
        )
    }

    /// Solves the matching QP for the current `B`, `M` values. The output is
    /// the primal optimum as a column vector.
    pub fn match_qp(
        &mut self,
        vertex: Var,
        quadratic: Var,
        opts: &crate::qp::SolverOptions,
        detached: bool,
    ) -> Result<Var> {
        let qp = crate::matching::matching_qp(self.value(vertex), self.value(quadratic))?;
        let solution = crate::qp::solve_qp(&qp.problem, opts)?;
        let v = DMatrix::from_column_slice(solution.x.len(), 1, solution.x.as_slice());
        Ok(self.push(
            v,
            Op::MatchQp {
                vertex,
                quadratic,
                qp: Box::new(qp),
                solution: Box::new(solution),
                detached,
            },
        ))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = DMatrix::from_row_slice(rows, cols, self.value(a).as_slice());
        self.push(v, Op::Reshape(a))
    }

    pub fn row_softmax(&mut self, a: Var, tau: f64) -> Var {
        let v = row_softmax(self.value(a), tau);
        self.push(v, Op::RowSoftmax { a, tau })
    }

    pub fn weighted_bce(&mut self, yhat: Var, target: DMatrix<f64>, k: f64) -> Result<Var> {
        let loss = super::loss::bce_with_weight(self.value(yhat), &target, k)?;
        Ok(self.push(DMatrix::from_element(1, 1, loss), Op::WeightedBce { yhat, target, k }))
    }

    pub fn qp_stats(&self) -> QpNodeStats {
        let mut s = QpNodeStats::default();
        for n in &self.nodes {
            if let Op::MatchQp { solution, qp, .. } = &n.op {
                s.count += 1;
                if has_degenerate_pair(qp, solution) {
                    s.degenerate += 1;
                }
            }
        }
        s
    }

    /// Smallest `|z|` fed into any ReLU; kinks closer than this make
    /// finite differences unreliable.
    pub fn relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.value(a).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// QP solutions recorded on the tape, in order.
    pub fn qp_solutions(&self) -> Vec<(&MatchingQp, &QpSolution)> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::MatchQp { qp, solution, .. } => Some((qp.as_ref(), solution.as_ref())),
                _ => None,
            })
            .collect()
    }

    /// Adjoints of a scalar output with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(NetError::ShapeMismatch("backward needs a scalar output".into()));
        }
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(DMatrix::from_element(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, d: DMatrix<f64>| match &mut grads[v.0] {
                Some(e) => *e += d,
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(*a, &g * self.value(*b).transpose());
                    acc(*b, self.value(*a).transpose() * &g);
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Affine { w, x, b } => {
                    acc(*w, &g * self.value(*x).transpose());
                    acc(*x, self.value(*w).transpose() * &g);
                    let gb = DMatrix::from_fn(g.nrows(), 1, |r, _| g.row(r).sum());
                    acc(*b, gb);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(*a, g.zip_map(x, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
                }
                Op::NormalizeColumns(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut d = DMatrix::zeros(x.nrows(), x.ncols());
                    for c in 0..x.ncols() {
                        let n = x.column(c).norm();
                        if n > 0.0 {
                            let yc = y.column(c);
                            let gc = g.column(c);
                            let proj = yc.dot(&gc);
                            d.set_column(c, &((gc - yc * proj) / n));
                        }
                    }
                    acc(*a, d);
                }
                Op::ColumnNorms(a) => {
                    let x = self.value(*a);
                    let mut d = DMatrix::zeros(x.nrows(), x.ncols());
                    for c in 0..x.ncols() {
                        let n = node.value[(0, c)];
                        if n > 0.0 {
                            d.set_column(c, &(x.column(c) * (g[(0, c)] / n)));
                        }
                    }
                    acc(*a, d);
                }
                Op::ScaleColumns(a, s) => {
                    let x = self.value(*a);
                    let sv = self.value(*s);
                    let mut da = g.clone();
                    for (c, mut col) in da.column_iter_mut().enumerate() {
                        col *= sv[(0, c)];
                    }
                    let ds = DMatrix::from_fn(1, x.ncols(), |_, c| x.column(c).dot(&g.column(c)));
                    acc(*a, da);
                    acc(*s, ds);
                }
                Op::VStack(a, b) => {
                    let ra = self.value(*a).nrows();
                    let rb = self.value(*b).nrows();
                    acc(*a, g.rows(0, ra).into_owned());
                    acc(*b, g.rows(ra, rb).into_owned());
                }
                Op::Expand {
                    edge,
                    edges_det,
                    edges_trk,
                    n_trk,
                } => acc(*edge, gather_edge_gradient(&g, edges_det, edges_trk, *n_trk)),
                Op::MatchQp {
                    vertex,
                    quadratic,
                    qp,
                    solution,
                    detached,
                } => {
                    if *detached {
                        continue;
                    }
                    let dx = DVector::from_column_slice(g.as_slice());
                    let qg = backward_qp(&qp.problem, solution, &dx)?;
                    // Q = 2ρI − (M + Mᵀ), q = −vec(B) row-major.
                    acc(*quadratic, -(&qg.d_quad + qg.d_quad.transpose()));
                    let db = -DMatrix::from_row_slice(qp.n_det, qp.n_trk, qg.d_linear.as_slice());
                    acc(*vertex, db);
                }
                Op::Reshape(a) => {
                    let src = self.value(*a);
                    let flat: Vec<f64> = g.transpose().as_slice().to_vec();
                    acc(*a, DMatrix::from_column_slice(src.nrows(), src.ncols(), &flat));
                }
                Op::RowSoftmax { a, tau } => {
                    let y = &node.value;
                    let mut d = DMatrix::zeros(y.nrows(), y.ncols());
                    for r in 0..y.nrows() {
                        let dot: f64 = (0..y.ncols()).map(|c| g[(r, c)] * y[(r, c)]).sum();
                        for c in 0..y.ncols() {
                            d[(r, c)] = y[(r, c)] * (g[(r, c)] - dot) / tau;
                        }
                    }
                    acc(*a, d);
                }
                Op::WeightedBce { yhat, target, k } => {
                    let p = self.value(*yhat);
                    let scale = g[(0, 0)] / (p.len() as f64);
                    let d = p.zip_map(target, |pi, yi| {
                        if !(LOSS_CLAMP..=1.0 - LOSS_CLAMP).contains(&pi) {
                            0.0
                        } else {
                            -scale * (k * yi / pi - (1.0 - yi) / (1.0 - pi))
                        }
                    });
                    acc(*yhat, d);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn has_degenerate_pair(qp: &MatchingQp, sol: &QpSolution) -> bool {
    let slack = sol.slack(&qp.problem);
    sol.ineq_dual
        .iter()
        .zip(slack.iter())
        .any(|(l, s)| *l < crate::qp::DEGENERACY_TOL && *s < crate::qp::DEGENERACY_TOL)
}

#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DMatrix<f64>>>,
}

impl Gradients {
    /// Adjoint of a leaf; zero-shaped like the value when unreachable.
    pub fn get(&self, tape: &Tape, v: Var) -> DMatrix<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            DMatrix::zeros(r, c)
        })
    }
}
