//! Tracking metrics and synthetic ground-truthed scenarios.

mod labels;
mod metrics;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geometry::BBox;
use crate::track::Track;

pub use labels::{label_detections, training_samples, LabeledFrame};
pub use metrics::{
    clear_mot, evaluate, id_measures, idf1, ClearMot, IdMeasures, MetricReport, MOSTLY_LOST, MOSTLY_TRACKED,
};
pub use synth::{
    certify, generate_scenario, long_occlusion_suite, run_tracker, standard_suite, FrameDetections, GtSequence,
    MotionPattern, Occlusion, OcclusionKind, Scenario, ScenarioKind, ScenarioSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("hypothesis frames {hyp:?} fall outside ground-truth frames {gt:?}")]
    FrameRangeMismatch { gt: (u32, u32), hyp: (u32, u32) },
    #[error("id {id} appears twice in frame {frame}")]
    DuplicateId { frame: u32, id: u64 },
    #[error("invalid box for id {id} in frame {frame}")]
    InvalidBox { frame: u32, id: u64 },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Boxes with identities, per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectories {
    pub frames: BTreeMap<u32, Vec<(u64, BBox)>>,
    /// Explicit frame range; otherwise the span of `frames`.
    pub span: Option<(u32, u32)>,
}

impl Trajectories {
    pub fn push(&mut self, frame: u32, id: u64, bbox: BBox) {
        self.frames.entry(frame).or_default().push((id, bbox));
    }

    pub fn with_span(mut self, first: u32, last: u32) -> Self {
        self.span = Some((first, last));
        self
    }

    /// Inclusive frame range; `(1, 0)` when empty.
    pub fn range(&self) -> (u32, u32) {
        self.span
            .unwrap_or_else(|| match (self.frames.keys().next(), self.frames.keys().next_back()) {
                (Some(&a), Some(&b)) => (a, b),
                _ => (1, 0),
            })
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.frames.values().flat_map(|v| v.iter().map(|(id, _)| *id)).collect()
    }

    pub fn num_boxes(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    /// Every history entry of every track, real and interpolated.
    pub fn from_tracks(tracks: &[Track]) -> Self {
        let mut t = Self::default();
        for tr in tracks {
            for e in &tr.history {
                t.push(e.frame, tr.id, e.bbox);
            }
        }
        for v in t.frames.values_mut() {
            v.sort_by_key(|(id, _)| *id);
        }
        t
    }

    /// Checks unique ids per frame and valid boxes.
    pub fn validate(&self) -> Result<()> {
        for (&frame, v) in &self.frames {
            let mut seen = BTreeSet::new();
            for (id, b) in v {
                if !seen.insert(*id) {
                    return Err(EvalError::DuplicateId { frame, id: *id });
                }
                if !b.is_valid() {
                    return Err(EvalError::InvalidBox { frame, id: *id });
                }
            }
        }
        Ok(())
    }
}
