//! Graph construction and the graph-matching association layer.
//!
//! Detections of the current frame and the live tracklets each form a
//! complete directed graph. Vertex affinities `B`, edge affinities `Mₑ` and
//! the quadratic affinity `M` feed a convex QP over the relaxed assignment
//! polytope; its optimum `X` is rounded greedily to a one-to-one matching.

mod affinity;
mod assemble;
mod kb;
mod rounding;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::BBox;
use crate::qp::{QpError, SolverOptions};

pub use affinity::{
    build_edge_affinity, build_vertex_affinity, expand_affinity, gather_edge_gradient, incidence_matrices,
    scatter_edge_affinity, AffinityBundle,
};
pub use assemble::{assemble_matching_qp, matching_constraints, matching_qp, EqualitySide, MatchingQp};
pub use kb::kb_objective;
pub use rounding::{greedy_round, Assignment};

/// Tolerance on unit norm for finalized features.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("invalid box for vertex {0}")]
    InvalidBox(usize),
    #[error("non-finite appearance for vertex {0}")]
    NonFinite(usize),
    #[error("inconsistent indicator matrices: {0}")]
    InconsistentIndicators(String),
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error(transparent)]
    Qp(#[from] QpError),
}

pub type Result<T> = std::result::Result<T, MatchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Detection,
    Tracklet,
}

/// One vertex: an appearance feature and a box.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexData {
    pub appearance: DVector<f64>,
    pub bbox: BBox,
    /// Detection index within the frame, or tracklet id.
    pub source_id: i64,
    pub frame: u32,
}

/// A complete directed graph over detections or tracklets with
/// L2-normalized vertex features.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGraph {
    kind: GraphKind,
    vertices: Vec<VertexData>,
}

impl FrameGraph {
    /// Validates boxes and normalizes every appearance vector.
    pub fn new(kind: GraphKind, mut vertices: Vec<VertexData>) -> Result<Self> {
        let dim = vertices.first().map(|v| v.appearance.len());
        for (i, v) in vertices.iter_mut().enumerate() {
            if !v.bbox.is_valid() {
                return Err(MatchError::InvalidBox(i));
            }
            if Some(v.appearance.len()) != dim {
                return Err(MatchError::DimensionMismatch(format!(
                    "vertex {i} has feature width {}",
                    v.appearance.len()
                )));
            }
            if !v.appearance.iter().all(|x| x.is_finite()) {
                return Err(MatchError::NonFinite(i));
            }
            v.appearance = l2_normalize(&v.appearance)?;
        }
        Ok(Self { kind, vertices })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn vertices(&self) -> &[VertexData] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.vertices.first().map(|v| v.appearance.len())
    }

    /// Ordered pairs `(i, i′)`, `i ≠ i′`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        complete_edges(self.len())
    }

    /// Vertex features as columns (d × n).
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        let d = self.feature_dim().unwrap_or(0);
        DMatrix::from_fn(d, self.len(), |r, c| self.vertices[c].appearance[r])
    }

    pub fn edge_features(&self) -> Vec<EdgeFeature> {
        self.edges()
            .into_iter()
            .map(|(i, j)| EdgeFeature::new(&self.vertices[i].appearance, &self.vertices[j].appearance))
            .collect()
    }

    /// Same graph with replaced (and re-normalized) vertex features.
    pub fn with_features(&self, features: &[DVector<f64>]) -> Result<Self> {
        if features.len() != self.len() {
            return Err(MatchError::DimensionMismatch(format!(
                "{} features for {} vertices",
                features.len(),
                self.len()
            )));
        }
        let vertices = self
            .vertices
            .iter()
            .zip(features)
            .map(|(v, f)| VertexData {
                appearance: f.clone(),
                ..v.clone()
            })
            .collect();
        Self::new(self.kind, vertices)
    }
}

/// Every ordered pair `(i, i′)` with `i ≠ i′`, in row-major order.
pub fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

/// `l2([h_i, h_i′])`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeature {
    pub feature: DVector<f64>,
}

impl EdgeFeature {
    pub fn new(start: &DVector<f64>, end: &DVector<f64>) -> Self {
        let d = start.len();
        let mut f = DVector::zeros(d + end.len());
        f.rows_mut(0, d).copy_from(start);
        f.rows_mut(d, end.len()).copy_from(end);
        let norm = f.norm();
        if norm > 0.0 {
            f /= norm;
        }
        Self { feature: f }
    }
}

pub fn l2_normalize(v: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(MatchError::ZeroVector);
    }
    Ok(v / norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Softmax temperature used for the sharpened scores.
    pub tau: f64,
    pub solver: SolverOptions,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Relaxed score map `X` (n_d × n_t).
    pub scores: DMatrix<f64>,
    /// One-to-one `(detection, tracklet)` pairs.
    pub assignment: Assignment,
    /// Row-wise temperature softmax of `X`.
    pub sharpened: DMatrix<f64>,
}

impl MatchResult {
    pub fn empty(n_det: usize, n_trk: usize) -> Self {
        Self {
            scores: DMatrix::zeros(n_det, n_trk),
            assignment: Vec::new(),
            sharpened: DMatrix::zeros(n_det, n_trk),
        }
    }
}

/// Full association step: affinities, QP, reshape, rounding.
pub fn match_graphs(det: &FrameGraph, trk: &FrameGraph, cfg: &MatchConfig) -> Result<MatchResult> {
    if det.is_empty() || trk.is_empty() {
        return Ok(MatchResult::empty(det.len(), trk.len()));
    }
    let bundle = AffinityBundle::build(det, trk)?;
    match_affinities(&bundle, cfg)
}

/// Association from precomputed affinities.
pub fn match_affinities(bundle: &AffinityBundle, cfg: &MatchConfig) -> Result<MatchResult> {
    let (nd, nt) = bundle.vertex.shape();
    if nd == 0 || nt == 0 {
        return Ok(MatchResult::empty(nd, nt));
    }
    let qp = assemble_matching_qp(bundle)?;
    let sol = crate::qp::solve_qp(&qp.problem, &cfg.solver)?;
    let scores = qp.reshape(&sol.x);
    let assignment = greedy_round(&scores);
    let sharpened = crate::net::sharpen_scores(&scores, cfg.tau);
    Ok(MatchResult {
        scores,
        assignment,
        sharpened,
    })
}
