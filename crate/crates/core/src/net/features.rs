use nalgebra::{DMatrix, DVector};

use super::mlp::Mlp;
use super::{NetError, Result};
use crate::geometry::BBox;
use crate::matching::FrameGraph;

/// Two-layer MLP followed by L2 normalization.
pub fn encode_appearance(raw: &DVector<f64>, mlp: &Mlp) -> Result<DVector<f64>> {
    if raw.len() != mlp.input_dim() {
        return Err(NetError::ShapeMismatch(format!(
            "feature width {} for an encoder expecting {}",
            raw.len(),
            mlp.input_dim()
        )));
    }
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(NetError::NonFinite);
    }
    unit(mlp.forward_vec(raw))
}

fn unit(v: DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(NetError::ZeroVector);
    }
    Ok(v / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AggregationMode {
    #[default]
    Mean,
    /// `s ← α·s + (1−α)·a` over the history, normalized once at the end.
    MovingAverage(f64),
    Last,
}

impl std::fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Mean => write!(f, "mean"),
            Self::MovingAverage(a) => write!(f, "ema:{a}"),
            Self::Last => write!(f, "last"),
        }
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "last" => Ok(Self::Last),
            _ => {
                let alpha = s
                    .strip_prefix("ema:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .filter(|a| (0.0..1.0).contains(a))
                    .ok_or_else(|| NetError::InvalidConfig(format!("unknown aggregation '{s}'")))?;
                Ok(Self::MovingAverage(alpha))
            }
        }
    }
}

/// Linear weights of each history entry (oldest first) before the final
/// normalization.
pub fn aggregation_weights(len: usize, mode: AggregationMode) -> Vec<f64> {
    match mode {
        AggregationMode::Mean => vec![1.0 / len as f64; len],
        AggregationMode::Last => (0..len).map(|k| if k + 1 == len { 1.0 } else { 0.0 }).collect(),
        AggregationMode::MovingAverage(alpha) => {
            // s₁ = a₁, s_k = α s_{k−1} + (1−α) a_k
            (0..len)
                .map(|k| {
                    let own = if k == 0 { 1.0 } else { 1.0 - alpha };
                    own * alpha.powi((len - 1 - k) as i32)
                })
                .collect()
        }
    }
}

pub fn aggregate_tracklet_feature(history: &[DVector<f64>], mode: AggregationMode) -> Result<DVector<f64>> {
    let first = history.first().ok_or(NetError::EmptyHistory)?;
    let mut acc = DVector::zeros(first.len());
    for (h, w) in history.iter().zip(aggregation_weights(history.len(), mode)) {
        if h.len() != first.len() {
            return Err(NetError::ShapeMismatch("history widths differ".into()));
        }
        acc += h * w;
    }
    unit(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcnConfig {
    /// Add box IoU to the aggregation weight (static camera).
    pub use_geometry: bool,
    pub num_layers: usize,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            use_geometry: false,
            num_layers: 1,
        }
    }
}

/// `cos(hᵢ, hⱼ) + IoU(gᵢ, gⱼ)`, or the cosine alone without geometry.
pub fn gcn_weight(hi: &DVector<f64>, hj: &DVector<f64>, gi: &BBox, gj: &BBox, cfg: &GcnConfig) -> f64 {
    let cos = hi.dot(hj) / (hi.norm() * hj.norm());
    if cfg.use_geometry {
        cos + gi.iou(gj)
    } else {
        cos
    }
}

pub fn iou_matrix(det: &[BBox], trk: &[BBox]) -> DMatrix<f64> {
    DMatrix::from_fn(det.len(), trk.len(), |i, j| det[i].iou(&trk[j]))
}

pub(crate) fn normalized_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    out
}

/// `h + ‖h‖·m/‖m‖` per column; a zero message leaves `h` as is.
fn add_normalized_message(h: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = h.clone();
    for c in 0..h.ncols() {
        let mn = m.column(c).norm();
        if mn > 0.0 {
            let scale = h.column(c).norm() / mn;
            let mut col = out.column_mut(c);
            col += m.column(c) * scale;
        }
    }
    out
}

/// One round of cross-graph message passing on feature columns; returns
/// the (unnormalized) new features of both sides.
pub fn gcn_layer(
    det: &DMatrix<f64>,
    trk: &DMatrix<f64>,
    iou: &DMatrix<f64>,
    mlp: &Mlp,
    cfg: &GcnConfig,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut w = normalized_columns(det).transpose() * normalized_columns(trk);
    if cfg.use_geometry {
        w += iou;
    }
    let m_det = trk * w.transpose();
    let m_trk = det * &w;
    let pre_det = add_normalized_message(det, &m_det);
    let pre_trk = add_normalized_message(trk, &m_trk);
    (mlp.forward(&pre_det), mlp.forward(&pre_trk))
}

/// Cross-graph GCN update of both graphs; features are re-normalized after
/// the last layer.
pub fn gcn_update(det: &FrameGraph, trk: &FrameGraph, mlp: &Mlp, cfg: &GcnConfig) -> Result<(FrameGraph, FrameGraph)> {
    if det.is_empty() || trk.is_empty() || cfg.num_layers == 0 {
        return Ok((det.clone(), trk.clone()));
    }
    let boxes = |g: &FrameGraph| g.vertices().iter().map(|v| v.bbox).collect::<Vec<_>>();
    let iou = iou_matrix(&boxes(det), &boxes(trk));
    let mut hd = det.feature_matrix();
    let mut ht = trk.feature_matrix();
    for _ in 0..cfg.num_layers {
        (hd, ht) = gcn_layer(&hd, &ht, &iou, mlp, cfg);
    }
    let cols = |h: &DMatrix<f64>| h.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>();
    let map = |e: crate::matching::MatchError| match e {
        crate::matching::MatchError::ZeroVector => NetError::ZeroVector,
        other => other.into(),
    };
    Ok((
        det.with_features(&cols(&hd)).map_err(map)?,
        trk.with_features(&cols(&ht)).map_err(map)?,
    ))
}
