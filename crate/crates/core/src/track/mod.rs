//! Online tracking loop.
//!
//! Each frame: predict every live track, match detections to tracks, drop
//! matches that fail the IoU, motion and appearance tests, try an IoU
//! assignment on the leftovers, update, then handle births and deaths.

mod hungarian;
mod interpolate;
mod kalman;

use nalgebra::{DMatrix, DVector, Matrix2x3};
use thiserror::Error;

use crate::geometry::BBox;
use crate::matching::{match_graphs, FrameGraph, GraphKind, MatchConfig, MatchError, VertexData};
use crate::net::{gcn_update, AggregationMode, MatchNet, NetError};

pub use hungarian::{hungarian, hungarian_max};
pub use interpolate::interpolate_tracks;
pub use kalman::{
    mahalanobis_gate, measurement, squared_mahalanobis, Covariance, KalmanConfig, KalmanState, Mean, CHI2_95_4DOF,
};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("covariance is not positive definite")]
    NonPositiveDefinite,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid detection {0}: {1}")]
    InvalidDetection(usize, String),
    #[error("frame {frame} does not follow frame {last}")]
    FrameOrder { frame: u32, last: u32 },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T> = std::result::Result<T, TrackError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CameraMotion {
    Static,
    #[default]
    Moving,
}

impl CameraMotion {
    /// Default appearance threshold for this kind of footage.
    pub fn default_sigma(self) -> f64 {
        match self {
            CameraMotion::Static => 0.7,
            CameraMotion::Moving => 0.6,
        }
    }
}

/// Association step used inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matcher {
    #[default]
    GraphMatching,
    /// Linear assignment on the vertex affinity alone.
    HungarianOnAffinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Squared-Mahalanobis gate.
    pub kappa: f64,
    /// Minimum cosine between a detection and a track.
    pub sigma: f64,
    /// Max frames since the last update before a track dies.
    pub delta: u32,
    pub iou_fallback_min: f64,
    pub camera_motion: CameraMotion,
    pub interpolate: bool,
    pub aggregation: AggregationMode,
    pub kalman: KalmanConfig,
    pub matching: MatchConfig,
}

impl TrackerConfig {
    pub fn for_camera(camera_motion: CameraMotion) -> Self {
        Self {
            kappa: CHI2_95_4DOF,
            sigma: camera_motion.default_sigma(),
            delta: 100,
            iou_fallback_min: 0.3,
            camera_motion,
            interpolate: false,
            aggregation: AggregationMode::Mean,
            kalman: KalmanConfig::default(),
            matching: MatchConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrackError::InvalidConfig(m.into()));
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad("sigma must lie in (0, 1)");
        }
        if self.delta < 1 {
            return bad("delta must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.iou_fallback_min) {
            return bad("iou_fallback_min must lie in [0, 1]");
        }
        if !(self.kalman.std_position > 0.0 && self.kalman.std_velocity > 0.0) {
            return bad("kalman noise scales must be positive");
        }
        if !(self.matching.tau > 0.0) {
            return bad("tau must be positive");
        }
        Ok(())
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::for_camera(CameraMotion::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    /// Raw appearance feature, encoded by the network when one is set.
    pub feature: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub frame: u32,
    pub bbox: BBox,
    /// `None` for interpolated entries.
    pub appearance: Option<DVector<f64>>,
    pub synthetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub history: Vec<HistoryEntry>,
    pub mean_appearance: DVector<f64>,
    pub kalman: KalmanState,
    pub last_update: u32,
    pub status: TrackStatus,
    aggregate: DVector<f64>,
    mode: AggregationMode,
}

impl Track {
    fn new(id: u64, frame: u32, bbox: BBox, appearance: DVector<f64>, cfg: &TrackerConfig) -> Self {
        Self {
            id,
            history: vec![HistoryEntry {
                frame,
                bbox,
                appearance: Some(appearance.clone()),
                synthetic: false,
            }],
            mean_appearance: appearance.clone(),
            kalman: KalmanState::initiate(&bbox, &cfg.kalman),
            last_update: frame,
            status: TrackStatus::Active,
            aggregate: appearance,
            mode: cfg.aggregation,
        }
    }

    fn absorb(&mut self, frame: u32, bbox: BBox, appearance: DVector<f64>, cfg: &KalmanConfig) -> Result<()> {
        self.kalman = self.kalman.update(&bbox, cfg)?;
        self.aggregate = match self.mode {
            AggregationMode::Mean => &self.aggregate + &appearance,
            AggregationMode::MovingAverage(a) => &self.aggregate * a + &appearance * (1.0 - a),
            AggregationMode::Last => appearance.clone(),
        };
        let norm = self.aggregate.norm();
        if norm > 0.0 {
            self.mean_appearance = &self.aggregate / norm;
        }
        self.history.push(HistoryEntry {
            frame,
            bbox,
            appearance: Some(appearance),
            synthetic: false,
        });
        self.last_update = frame;
        Ok(())
    }

    /// Box the motion model expects in the current frame.
    pub fn predicted_box(&self) -> BBox {
        self.kalman.bbox()
    }

    /// Appearance vectors of the real (non-interpolated) entries.
    pub fn appearances(&self) -> Vec<DVector<f64>> {
        self.history.iter().filter_map(|e| e.appearance.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub frame: u32,
    /// `(detection index, track id)`, sorted by detection.
    pub matches: Vec<(usize, u64)>,
    /// Detections whose match came from the IoU fallback.
    pub fallback: Vec<usize>,
    /// Matches removed by the IoU, gate or appearance tests.
    pub rejected: usize,
    pub births: Vec<u64>,
    pub deaths: Vec<u64>,
    /// Unmatched detections that did not start a track.
    pub suppressed: usize,
    pub matcher_failed: bool,
}

/// Inputs of the birth test for one detection against the live tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthEvidence {
    pub max_cosine: f64,
    pub any_in_gate: bool,
    pub any_overlap: bool,
}

/// Appearance, gate and overlap summary of `det` against `tracks`.
pub fn birth_evidence(
    det_box: &BBox,
    appearance: &DVector<f64>,
    tracks: &[Track],
    cfg: &TrackerConfig,
) -> Result<BirthEvidence> {
    let mut ev = BirthEvidence {
        max_cosine: f64::NEG_INFINITY,
        any_in_gate: false,
        any_overlap: false,
    };
    for t in tracks.iter().filter(|t| t.status == TrackStatus::Active) {
        ev.max_cosine = ev.max_cosine.max(appearance.dot(&t.mean_appearance));
        ev.any_in_gate |= t.kalman.gate_distance(det_box, &cfg.kalman)? <= cfg.kappa;
        ev.any_overlap |= det_box.iou(&t.predicted_box()) > 0.0;
    }
    Ok(ev)
}

/// A leftover detection starts a track if it is dissimilar to every track,
/// outside every motion gate, or overlaps no track.
pub fn birth_filter(det_box: &BBox, appearance: &DVector<f64>, tracks: &[Track], cfg: &TrackerConfig) -> Result<bool> {
    let ev = birth_evidence(det_box, appearance, tracks, cfg)?;
    Ok(ev.max_cosine < cfg.sigma || !ev.any_in_gate || !ev.any_overlap)
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    matcher: Matcher,
    net: Option<MatchNet>,
    active: Vec<Track>,
    dead: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(config: TrackerConfig, matcher: Matcher) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            matcher,
            net: None,
            active: Vec::new(),
            dead: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    /// Uses `net` to encode detections and refine features before matching.
    pub fn with_net(mut self, net: MatchNet) -> Self {
        self.net = Some(net);
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn matcher(&self) -> Matcher {
        self.matcher
    }

    pub fn active_tracks(&self) -> &[Track] {
        &self.active
    }

    pub fn dead_tracks(&self) -> &[Track] {
        &self.dead
    }

    /// Every track seen so far, sorted by id, interpolated if configured.
    pub fn tracks(&self) -> Vec<Track> {
        let mut all: Vec<Track> = self.active.iter().chain(&self.dead).cloned().collect();
        all.sort_by_key(|t| t.id);
        if self.config.interpolate {
            interpolate_tracks(&all)
        } else {
            all
        }
    }

    fn encode(&self, dets: &[Detection]) -> Result<Vec<DVector<f64>>> {
        dets.iter()
            .enumerate()
            .map(|(i, d)| {
                if !d.bbox.is_valid() {
                    return Err(TrackError::InvalidDetection(i, "box must have positive size".into()));
                }
                if !d.feature.iter().all(|v| v.is_finite()) {
                    return Err(TrackError::InvalidDetection(i, "non-finite feature".into()));
                }
                match &self.net {
                    Some(net) => net
                        .encode(&d.feature)
                        .map_err(|e| TrackError::InvalidDetection(i, e.to_string())),
                    None => {
                        let n = d.feature.norm();
                        if n == 0.0 {
                            return Err(TrackError::InvalidDetection(i, "zero feature".into()));
                        }
                        Ok(&d.feature / n)
                    }
                }
            })
            .collect()
    }

    fn graphs(&self, dets: &[Detection], enc: &[DVector<f64>], frame: u32) -> Result<(FrameGraph, FrameGraph)> {
        let dv = dets
            .iter()
            .zip(enc)
            .enumerate()
            .map(|(i, (d, a))| VertexData {
                appearance: a.clone(),
                bbox: d.bbox,
                source_id: i as i64,
                frame,
            })
            .collect();
        let tv = self
            .active
            .iter()
            .map(|t| VertexData {
                appearance: t.mean_appearance.clone(),
                bbox: t.predicted_box(),
                source_id: t.id as i64,
                frame,
            })
            .collect();
        let det = FrameGraph::new(GraphKind::Detection, dv)?;
        let trk = FrameGraph::new(GraphKind::Tracklet, tv)?;
        match &self.net {
            Some(net) => Ok(gcn_update(&det, &trk, &net.gcn_mlp, &net.gcn)?),
            None => Ok((det, trk)),
        }
    }

    fn hungarian_on_affinity(det: &FrameGraph, trk: &FrameGraph) -> Vec<(usize, usize)> {
        if det.is_empty() || trk.is_empty() {
            return Vec::new();
        }
        hungarian_max(&(det.feature_matrix().transpose() * trk.feature_matrix()))
    }

    /// Advances the loop to `frame`. Frames must be strictly increasing;
    /// skipped frames are predicted through.
    pub fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<StepReport> {
        self.step_with_warp(frame, dets, None)
    }

    /// Like [`Tracker::step`], first warping every track by `warp`.
    pub fn step_with_warp(
        &mut self,
        frame: u32,
        dets: &[Detection],
        warp: Option<&Matrix2x3<f64>>,
    ) -> Result<StepReport> {
        let gap = match self.last_frame {
            Some(last) if frame <= last => return Err(TrackError::FrameOrder { frame, last }),
            Some(last) => frame - last,
            None => 1,
        };
        let enc = self.encode(dets)?;
        let cfg = self.config.clone();
        for t in &mut self.active {
            if let Some(a) = warp {
                t.kalman = t.kalman.warp(a)?;
            }
            for _ in 0..gap {
                t.kalman = t.kalman.predict(&cfg.kalman)?;
            }
        }
        self.last_frame = Some(frame);
        let mut report = StepReport {
            frame,
            ..Default::default()
        };

        let (dg, tg) = self.graphs(dets, &enc, frame)?;
        let proposed = match self.matcher {
            Matcher::HungarianOnAffinity => Self::hungarian_on_affinity(&dg, &tg),
            Matcher::GraphMatching => {
                let res = match &self.net {
                    Some(net) => net.associate(&dg, &tg, &cfg.matching).map_err(TrackError::from),
                    None => match_graphs(&dg, &tg, &cfg.matching).map_err(TrackError::from),
                };
                match res {
                    Ok(r) => r.assignment,
                    Err(e) => {
                        log::warn!("frame {frame}: graph matching failed ({e}), using linear assignment");
                        report.matcher_failed = true;
                        Self::hungarian_on_affinity(&dg, &tg)
                    }
                }
            }
        };

        let (nd, nt) = (dets.len(), self.active.len());
        let mut det_match = vec![None; nd];
        let mut trk_taken = vec![false; nt];
        for (i, j) in proposed {
            let t = &self.active[j];
            let pred = t.predicted_box();
            let ok = dets[i].bbox.iou(&pred) > 0.0
                && t.kalman.gate_distance(&dets[i].bbox, &cfg.kalman)? <= cfg.kappa
                && enc[i].dot(&t.mean_appearance) >= cfg.sigma;
            if ok {
                det_match[i] = Some(j);
                trk_taken[j] = true;
            } else {
                report.rejected += 1;
            }
        }

        let free_d: Vec<usize> = (0..nd).filter(|&i| det_match[i].is_none()).collect();
        let free_t: Vec<usize> = (0..nt).filter(|&j| !trk_taken[j]).collect();
        if !free_d.is_empty() && !free_t.is_empty() {
            let iou = DMatrix::from_fn(free_d.len(), free_t.len(), |a, b| {
                let v = dets[free_d[a]].bbox.iou(&self.active[free_t[b]].predicted_box());
                if v >= cfg.iou_fallback_min {
                    v
                } else {
                    0.0
                }
            });
            for (a, b) in hungarian_max(&iou) {
                if iou[(a, b)] >= cfg.iou_fallback_min && iou[(a, b)] > 0.0 {
                    det_match[free_d[a]] = Some(free_t[b]);
                    trk_taken[free_t[b]] = true;
                    report.fallback.push(free_d[a]);
                }
            }
        }

        // births are judged against the tracks as they stood before updates
        let mut newborn = Vec::new();
        for i in (0..nd).filter(|&i| det_match[i].is_none()) {
            if birth_filter(&dets[i].bbox, &enc[i], &self.active, &cfg)? {
                newborn.push(i);
            } else {
                report.suppressed += 1;
            }
        }

        for (i, m) in det_match.iter().enumerate() {
            if let Some(j) = *m {
                self.active[j].absorb(frame, dets[i].bbox, enc[i].clone(), &cfg.kalman)?;
                report.matches.push((i, self.active[j].id));
            }
        }
        for i in newborn {
            let id = self.next_id;
            self.next_id += 1;
            self.active
                .push(Track::new(id, frame, dets[i].bbox, enc[i].clone(), &cfg));
            report.births.push(id);
        }

        let (mut keep, mut gone) = (Vec::new(), Vec::new());
        for mut t in self.active.drain(..) {
            if frame - t.last_update > cfg.delta {
                t.status = TrackStatus::Dead;
                report.deaths.push(t.id);
                gone.push(t);
            } else {
                keep.push(t);
            }
        }
        self.active = keep;
        self.dead.extend(gone);
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::aggregate_tracklet_feature;

    fn unit(v: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(v);
        let n = v.norm();
        v / n
    }

    fn det(cx: f64, cy: f64, f: &[f64]) -> Detection {
        Detection {
            bbox: BBox::new(cx, cy, 20.0, 40.0),
            confidence: 1.0,
            feature: unit(f),
        }
    }

    #[test]
    fn config_defaults() {
        let c = TrackerConfig::default();
        assert_eq!(c.kappa, 9.4877);
        assert_eq!(c.sigma, 0.6);
        assert_eq!(c.delta, 100);
        assert_eq!(c.iou_fallback_min, 0.3);
        assert_eq!(c.matching.tau, 1e-3);
        assert_eq!(TrackerConfig::for_camera(CameraMotion::Static).sigma, 0.7);
        let mut bad = c.clone();
        bad.sigma = 1.0;
        assert!(bad.validate().is_err());
        bad = c.clone();
        bad.delta = 0;
        assert!(bad.validate().is_err());
        bad = c;
        bad.kappa = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cold_start_births_everything() {
        let mut tr = Tracker::new(TrackerConfig::default(), Matcher::GraphMatching).unwrap();
        let r = tr
            .step(1, &[det(0.0, 0.0, &[1.0, 0.0]), det(100.0, 0.0, &[0.0, 1.0])])
            .unwrap();
        assert_eq!(r.births, vec![1, 2]);
        assert!(r.matches.is_empty());
    }

    #[test]
    fn single_object_keeps_id() {
        for m in [Matcher::GraphMatching, Matcher::HungarianOnAffinity] {
            let mut tr = Tracker::new(TrackerConfig::default(), m).unwrap();
            tr.step(1, &[det(50.0, 50.0, &[1.0, 0.2, 0.0])]).unwrap();
            for f in 2..10 {
                let r = tr.step(f, &[det(50.0, 50.0, &[1.0, 0.2, 0.0])]).unwrap();
                assert_eq!(r.matches, vec![(0, 1)]);
            }
            assert_eq!(tr.tracks().len(), 1);
            assert_eq!(tr.tracks()[0].history.len(), 9);
        }
    }

    #[test]
    fn swapped_appearance_rejected_then_rescued_by_overlap() {
        let mut tr = Tracker::new(TrackerConfig::default(), Matcher::GraphMatching).unwrap();
        tr.step(1, &[det(50.0, 50.0, &[1.0, 0.0])]).unwrap();
        // same place, orthogonal look: the appearance test rejects, IoU rescues
        let r = tr.step(2, &[det(50.0, 50.0, &[0.0, 1.0])]).unwrap();
        assert_eq!(r.rejected, 1);
        assert_eq!(r.fallback.len(), 1);
        assert_eq!(r.matches, vec![(0, 1)]);
    }

    #[test]
    fn far_detection_is_a_birth() {
        let mut tr = Tracker::new(TrackerConfig::default(), Matcher::GraphMatching).unwrap();
        tr.step(1, &[det(50.0, 50.0, &[1.0, 0.0])]).unwrap();
        let r = tr.step(2, &[det(400.0, 50.0, &[1.0, 0.0])]).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.births, vec![2]);
    }

    #[test]
    fn death_after_delta() {
        let cfg = TrackerConfig {
            delta: 3,
            ..TrackerConfig::default()
        };
        let mut tr = Tracker::new(cfg, Matcher::GraphMatching).unwrap();
        tr.step(1, &[det(50.0, 50.0, &[1.0])]).unwrap();
        for f in 2..=4 {
            let r = tr.step(f, &[]).unwrap();
            assert!(r.deaths.is_empty(), "frame {f}");
            assert_eq!(tr.active_tracks().len(), 1);
        }
        let r = tr.step(5, &[]).unwrap();
        assert_eq!(r.deaths, vec![1]);
        assert!(tr.active_tracks().is_empty());
        assert_eq!(tr.dead_tracks()[0].status, TrackStatus::Dead);
        // a dead track never matches again and its id is not reused
        let r = tr.step(6, &[det(50.0, 50.0, &[1.0])]).unwrap();
        assert_eq!(r.births, vec![2]);
    }

    #[test]
    fn frames_must_increase() {
        let mut tr = Tracker::new(TrackerConfig::default(), Matcher::GraphMatching).unwrap();
        tr.step(3, &[]).unwrap();
        assert!(matches!(tr.step(3, &[]), Err(TrackError::FrameOrder { .. })));
    }

    #[test]
    fn invalid_detection() {
        let mut tr = Tracker::new(TrackerConfig::default(), Matcher::GraphMatching).unwrap();
        let mut d = det(0.0, 0.0, &[1.0]);
        d.feature[0] = f64::NAN;
        assert!(matches!(tr.step(1, &[d]), Err(TrackError::InvalidDetection(0, _))));
    }

    #[test]
    fn birth_rules() {
        let cfg = TrackerConfig::default();
        let mut tr = Tracker::new(cfg.clone(), Matcher::GraphMatching).unwrap();
        tr.step(1, &[det(50.0, 50.0, &[1.0, 0.0]), det(200.0, 50.0, &[0.0, 1.0])])
            .unwrap();
        let tracks = tr.active_tracks();
        // identical to a track: not new
        let t0 = &tracks[0];
        assert!(!birth_filter(&t0.predicted_box(), &t0.mean_appearance, tracks, &cfg).unwrap());
        // dissimilar to every track and disjoint from every box: new
        let far = BBox::new(500.0, 500.0, 20.0, 40.0);
        let low = unit(&[0.1, -(0.99f64).sqrt()]);
        assert!(low.dot(&tracks[0].mean_appearance) < cfg.sigma);
        assert!(birth_filter(&far, &low, tracks, &cfg).unwrap());
        // same place, similar look, but offset enough to leave the gate
        let near = BBox::new(58.0, 50.0, 20.0, 40.0);
        let ev = birth_evidence(&near, &t0.mean_appearance, tracks, &cfg).unwrap();
        assert!(ev.any_overlap);
        assert_eq!(
            birth_filter(&near, &t0.mean_appearance, tracks, &cfg).unwrap(),
            !ev.any_in_gate
        );
        // no tracks at all
        assert!(birth_filter(&far, &low, &[], &cfg).unwrap());
    }

    #[test]
    fn running_appearance_matches_aggregation() {
        for mode in [
            AggregationMode::Mean,
            AggregationMode::MovingAverage(0.8),
            AggregationMode::Last,
        ] {
            let cfg = TrackerConfig {
                aggregation: mode,
                sigma: 0.1,
                ..TrackerConfig::default()
            };
            let mut tr = Tracker::new(cfg, Matcher::GraphMatching).unwrap();
            let feats = [[1.0, 0.2, 0.1], [0.9, 0.4, 0.0], [1.0, 0.0, 0.3], [0.8, 0.3, 0.3]];
            for (f, v) in feats.iter().enumerate() {
                tr.step(f as u32 + 1, &[det(50.0, 50.0, v)]).unwrap();
            }
            let t = &tr.active_tracks()[0];
            let want = aggregate_tracklet_feature(&t.appearances(), mode).unwrap();
            assert!((&t.mean_appearance - want).amax() < 1e-12, "{mode}");
        }
    }

    #[test]
    fn skipped_frames_are_predicted() {
        let mut tr = Tracker::new(TrackerConfig::default(), Matcher::GraphMatching).unwrap();
        tr.step(1, &[det(50.0, 50.0, &[1.0])]).unwrap();
        let before = tr.active_tracks()[0].kalman.covariance.trace();
        tr.step(5, &[]).unwrap();
        assert!(tr.active_tracks()[0].kalman.covariance.trace() > before);
        assert_eq!(tr.active_tracks()[0].last_update, 1);
    }
}
