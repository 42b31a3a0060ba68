//! Ground-truth labels for detections and frame-pair training samples.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{Scenario, Trajectories};
use crate::geometry::BBox;
use crate::net::{NetError, TrainSample};
use crate::track::{hungarian_max, Detection};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub frame: u32,
    pub detections: Vec<Detection>,
    /// Ground-truth identity, if the detection matches one.
    pub labels: Vec<Option<u64>>,
}

/// Assigns detections to ground-truth boxes by maximum IoU, keeping pairs
/// with IoU ≥ `min_iou`.
pub fn label_detections(gt: &Trajectories, frame: u32, dets: &[Detection], min_iou: f64) -> Vec<Option<u64>> {
    let mut labels = vec![None; dets.len()];
    let Some(g) = gt.frames.get(&frame) else {
        return labels;
    };
    let iou = DMatrix::from_fn(dets.len(), g.len(), |i, j| dets[i].bbox.iou(&g[j].1));
    for (i, j) in hungarian_max(&iou) {
        if iou[(i, j)] >= min_iou {
            labels[i] = Some(g[j].0);
        }
    }
    labels
}

impl Scenario {
    /// Frames with the generator's own identities as labels.
    pub fn labeled_frames(&self) -> Vec<LabeledFrame> {
        self.frames
            .iter()
            .map(|f| LabeledFrame {
                frame: f.frame,
                detections: f.detections.clone(),
                labels: f.identities.iter().map(|&i| Some(i)).collect(),
            })
            .collect()
    }
}

/// One sample per pair of consecutive frames. Tracklets are the identities
/// labeled in the earlier frame, each with up to `max_history` of its most
/// recent features; detections are every detection of the later frame.
pub fn training_samples(frames: &[LabeledFrame], max_history: usize) -> Result<Vec<TrainSample>, NetError> {
    let mut history: BTreeMap<u64, Vec<(DVector<f64>, BBox)>> = BTreeMap::new();
    let mut out = Vec::new();
    let max_history = max_history.max(1);
    for (k, cur) in frames.iter().enumerate() {
        if k > 0 {
            let prev = &frames[k - 1];
            let ids: Vec<u64> = history
                .keys()
                .copied()
                .filter(|id| prev.labels.contains(&Some(*id)))
                .collect();
            if !ids.is_empty() && !cur.detections.is_empty() {
                let hist: Vec<Vec<DVector<f64>>> = ids
                    .iter()
                    .map(|id| {
                        let h = &history[id];
                        h[h.len().saturating_sub(max_history)..]
                            .iter()
                            .map(|(f, _)| f.clone())
                            .collect()
                    })
                    .collect();
                let trk_boxes: Vec<BBox> = ids.iter().map(|id| history[id].last().unwrap().1).collect();
                let target = DMatrix::from_fn(cur.detections.len(), ids.len(), |i, j| {
                    if cur.labels[i] == Some(ids[j]) {
                        1.0
                    } else {
                        0.0
                    }
                });
                let feats: Vec<DVector<f64>> = cur.detections.iter().map(|d| d.feature.clone()).collect();
                let boxes: Vec<BBox> = cur.detections.iter().map(|d| d.bbox).collect();
                out.push(TrainSample::new(&feats, boxes, &hist, trk_boxes, target)?);
            }
        }
        for (d, l) in cur.detections.iter().zip(&cur.labels) {
            if let Some(id) = l {
                history.entry(*id).or_default().push((d.feature.clone(), d.bbox));
            }
        }
    }
    Ok(out)
}
