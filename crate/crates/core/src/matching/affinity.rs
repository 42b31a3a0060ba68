use nalgebra::DMatrix;

use super::{complete_edges, FrameGraph, MatchError, Result};

/// First- and second-order affinities of a graph pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityBundle {
    /// Vertex affinity `B` (n_d × n_t).
    pub vertex: DMatrix<f64>,
    /// Edge affinity `Mₑ` (|E_D| × |E_T|).
    pub edge: DMatrix<f64>,
    /// Start-vertex indicator of detection edges (n_d × |E_D|).
    pub start_det: DMatrix<f64>,
    /// End-vertex indicator of detection edges.
    pub end_det: DMatrix<f64>,
    pub start_trk: DMatrix<f64>,
    pub end_trk: DMatrix<f64>,
    /// Quadratic affinity `M` ((n_d·n_t) × (n_d·n_t)), row-major pair index.
    pub quadratic: DMatrix<f64>,
}

impl AffinityBundle {
    pub fn build(det: &FrameGraph, trk: &FrameGraph) -> Result<Self> {
        let vertex = build_vertex_affinity(det, trk)?;
        let edge = build_edge_affinity(det, trk)?;
        let (start_det, end_det) = incidence_matrices(det.len());
        let (start_trk, end_trk) = incidence_matrices(trk.len());
        let quadratic = expand_affinity(&edge, &start_det, &end_det, &start_trk, &end_trk)?;
        Ok(Self {
            vertex,
            edge,
            start_det,
            end_det,
            start_trk,
            end_trk,
            quadratic,
        })
    }
}

fn check_dims(det: &FrameGraph, trk: &FrameGraph) -> Result<()> {
    match (det.feature_dim(), trk.feature_dim()) {
        (Some(a), Some(b)) if a != b => Err(MatchError::DimensionMismatch(format!(
            "detection features have width {a}, tracklet features {b}"
        ))),
        _ => Ok(()),
    }
}

/// `B[i, j] = h_iᵀ h_j`.
pub fn build_vertex_affinity(det: &FrameGraph, trk: &FrameGraph) -> Result<DMatrix<f64>> {
    check_dims(det, trk)?;
    let (d, t) = (det.vertices(), trk.vertices());
    Ok(DMatrix::from_fn(d.len(), t.len(), |i, j| {
        d[i].appearance.dot(&t[j].appearance)
    }))
}

/// `Mₑ[u, v] = h_{i,i′}ᵀ h_{j,j′}` over both edge lists.
pub fn build_edge_affinity(det: &FrameGraph, trk: &FrameGraph) -> Result<DMatrix<f64>> {
    check_dims(det, trk)?;
    let ed = det.edge_features();
    let et = trk.edge_features();
    Ok(DMatrix::from_fn(ed.len(), et.len(), |u, v| {
        ed[u].feature.dot(&et[v].feature)
    }))
}

/// Start and end indicator matrices (vertex × edge) of the complete graph.
pub fn incidence_matrices(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let edges = complete_edges(n);
    let mut start = DMatrix::zeros(n, edges.len());
    let mut end = DMatrix::zeros(n, edges.len());
    for (u, &(i, j)) in edges.iter().enumerate() {
        start[(i, u)] = 1.0;
        end[(j, u)] = 1.0;
    }
    (start, end)
}

/// Vertex of the single 1 entry in each column.
fn column_owners(ind: &DMatrix<f64>, name: &str) -> Result<Vec<usize>> {
    (0..ind.ncols())
        .map(|c| {
            let mut owner = None;
            for r in 0..ind.nrows() {
                let v = ind[(r, c)];
                if v == 1.0 {
                    if owner.replace(r).is_some() {
                        return Err(MatchError::InconsistentIndicators(format!(
                            "{name} column {c} has more than one vertex"
                        )));
                    }
                } else if v != 0.0 {
                    return Err(MatchError::InconsistentIndicators(format!(
                        "{name} entry ({r}, {c}) is {v}"
                    )));
                }
            }
            owner.ok_or_else(|| MatchError::InconsistentIndicators(format!("{name} column {c} has no vertex")))
        })
        .collect()
}

/// Scatter `Mₑ` into `M = (S_D ⊗ S_T) diag(vec Mₑ) (T_D ⊗ T_T)ᵀ` without
/// forming any Kronecker product: `M[(i,j),(i′,j′)] = Mₑ[u, v]` for
/// `e_u = (i, i′)`, `e_v = (j, j′)`.
pub fn expand_affinity(
    edge: &DMatrix<f64>,
    start_det: &DMatrix<f64>,
    end_det: &DMatrix<f64>,
    start_trk: &DMatrix<f64>,
    end_trk: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let nd = start_det.nrows();
    let nt = start_trk.nrows();
    if end_det.shape() != start_det.shape() || end_trk.shape() != start_trk.shape() {
        return Err(MatchError::InconsistentIndicators(
            "start and end indicators differ in shape".into(),
        ));
    }
    if edge.nrows() != start_det.ncols() || edge.ncols() != start_trk.ncols() {
        return Err(MatchError::InconsistentIndicators(format!(
            "edge affinity is {}x{}, indicators cover {}x{} edges",
            edge.nrows(),
            edge.ncols(),
            start_det.ncols(),
            start_trk.ncols()
        )));
    }
    let sd = column_owners(start_det, "S_D")?;
    let td = column_owners(end_det, "T_D")?;
    let st = column_owners(start_trk, "S_T")?;
    let tt = column_owners(end_trk, "T_T")?;
    let ed: Vec<_> = sd.into_iter().zip(td).collect();
    let et: Vec<_> = st.into_iter().zip(tt).collect();
    Ok(scatter_edge_affinity(edge, &ed, &et, nd, nt))
}

/// Scatter with explicit edge lists.
pub fn scatter_edge_affinity(
    edge: &DMatrix<f64>,
    edges_det: &[(usize, usize)],
    edges_trk: &[(usize, usize)],
    nd: usize,
    nt: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nd * nt, nd * nt);
    for (u, &(i, ip)) in edges_det.iter().enumerate() {
        for (v, &(j, jp)) in edges_trk.iter().enumerate() {
            m[(i * nt + j, ip * nt + jp)] += edge[(u, v)];
        }
    }
    m
}

/// Adjoint of [`scatter_edge_affinity`]: `dMₑ[u, v] = dM[(i,j),(i′,j′)]`.
pub fn gather_edge_gradient(
    d_quadratic: &DMatrix<f64>,
    edges_det: &[(usize, usize)],
    edges_trk: &[(usize, usize)],
    nt: usize,
) -> DMatrix<f64> {
    DMatrix::from_fn(edges_det.len(), edges_trk.len(), |u, v| {
        let (i, ip) = edges_det[u];
        let (j, jp) = edges_trk[v];
        d_quadratic[(i * nt + j, ip * nt + jp)]
    })
}
