use nalgebra::DMatrix;

use super::{NetError, Result};

/// Predictions are clamped to `[LOSS_CLAMP, 1 − LOSS_CLAMP]` before logs.
pub const LOSS_CLAMP: f64 = 1e-7;

pub(crate) fn row_softmax(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut out = x / tau;
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Row-wise softmax of `X / τ`.
pub fn sharpen_scores(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    assert!(tau > 0.0, "temperature must be positive");
    row_softmax(x, tau)
}

pub(crate) fn bce_with_weight(yhat: &DMatrix<f64>, target: &DMatrix<f64>, k: f64) -> Result<f64> {
    if yhat.shape() != target.shape() {
        return Err(NetError::ShapeMismatch(format!(
            "prediction is {:?}, target is {:?}",
            yhat.shape(),
            target.shape()
        )));
    }
    if yhat.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = yhat
        .iter()
        .zip(target.iter())
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
            k * y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-total / yhat.len() as f64)
}

/// `−(1/(n_d·n_t)) Σ [k·y·log ŷ + (1−y)·log(1−ŷ)]` with `k = n_t − 1`.
pub fn weighted_bce_loss(yhat: &DMatrix<f64>, target: &DMatrix<f64>, n_trk: usize) -> Result<f64> {
    if yhat.ncols() != n_trk {
        return Err(NetError::ShapeMismatch(format!(
            "prediction has {} columns for {n_trk} tracklets",
            yhat.ncols()
        )));
    }
    bce_with_weight(yhat, target, n_trk.saturating_sub(1) as f64)
}
