//! Deterministic synthetic scenarios with known identities.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EvalError, Result, Trajectories};
use crate::geometry::BBox;
use crate::net::MatchNet;
use crate::track::{CameraMotion, Detection, Matcher, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionPattern {
    /// Independent constant velocities.
    Linear,
    /// Pairs moving in opposite directions that cross mid-sequence.
    Crossing,
    /// A formation sharing one velocity.
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionKind {
    /// No detection.
    Hidden,
    /// Detection present, appearance replaced by noise.
    Corrupted,
    /// Detection present, appearance drawn from another identity.
    Mimic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub object: usize,
    pub start: u32,
    pub length: u32,
    pub kind: OcclusionKind,
}

impl Occlusion {
    pub fn covers(&self, frame: u32) -> bool {
        frame >= self.start && frame < self.start + self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Plain,
    /// Built around an occlusion that stresses association.
    Occlusion,
    /// Occlusion scenario whose consistent assignment is unique.
    Certified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub frames: u32,
    pub objects: usize,
    pub motion: MotionPattern,
    /// Pixels per frame.
    pub speed: f64,
    /// Distance between neighbouring objects at the start.
    pub spacing: f64,
    pub box_size: (f64, f64),
    pub occlusions: Vec<Occlusion>,
    pub feature_dim: usize,
    /// Cosine between the appearance centers of two identities.
    pub center_cosine: f64,
    /// Standard deviation of per-coordinate feature noise, relative to a
    /// unit center.
    pub feature_noise: f64,
    pub box_jitter: f64,
    pub dropout: f64,
    pub camera: CameraMotion,
}

impl ScenarioSpec {
    pub fn new(name: &str, seed: u64, objects: usize, motion: MotionPattern) -> Self {
        Self {
            name: name.to_string(),
            kind: ScenarioKind::Plain,
            seed,
            frames: 60,
            objects,
            motion,
            speed: 2.0,
            spacing: 60.0,
            box_size: (30.0, 60.0),
            occlusions: Vec::new(),
            feature_dim: 32,
            center_cosine: 0.0,
            feature_noise: 0.0,
            box_jitter: 0.0,
            dropout: 0.0,
            camera: CameraMotion::Static,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::InvalidSpec(m));
        if self.objects == 0 || self.frames == 0 {
            return bad("need at least one object and one frame".into());
        }
        if self.feature_dim < self.objects + 1 {
            return bad(format!("feature_dim must exceed the object count ({})", self.objects));
        }
        if !(0.0..1.0).contains(&self.center_cosine) {
            return bad("center_cosine must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        if !(self.feature_noise >= 0.0 && self.box_jitter >= 0.0 && self.speed >= 0.0) {
            return bad("noise, jitter and speed must be nonnegative".into());
        }
        if !(self.box_size.0 > 0.0 && self.box_size.1 > 0.0 && self.spacing > 0.0) {
            return bad("box size and spacing must be positive".into());
        }
        for o in &self.occlusions {
            if o.object >= self.objects || o.start < 1 || o.length == 0 {
                return bad(format!("bad occlusion {o:?}"));
            }
            if let OcclusionKind::Mimic(k) = o.kind {
                if k >= self.objects || k == o.object {
                    return bad(format!("bad mimic target in {o:?}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtSequence {
    pub trajectories: Trajectories,
    pub camera: CameraMotion,
    /// Unit appearance center of identity `k + 1`.
    pub centers: Vec<DVector<f64>>,
    pub feature_noise: f64,
    pub occlusions: Vec<Occlusion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
    /// Ground-truth identity of each detection.
    pub identities: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub gt: GtSequence,
    pub frames: Vec<FrameDetections>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn trajectory(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, f64, f64, f64)> {
    // (x0, y0, vx, vy) per object
    let (n, s, v) = (spec.objects, spec.spacing, spec.speed);
    let travel = v * spec.frames as f64;
    (0..n)
        .map(|k| match spec.motion {
            MotionPattern::Linear => {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                (
                    200.0 + k as f64 * s,
                    200.0 + (k % 2) as f64 * s,
                    v * a.cos(),
                    v * a.sin(),
                )
            }
            MotionPattern::Crossing => {
                let row = (k / 2) as f64 * 2.0 * s;
                let dy = spec.box_size.1 * 0.25;
                if k % 2 == 0 {
                    (100.0, 200.0 + row, v, 0.0)
                } else {
                    (100.0 + travel, 200.0 + row + dy, -v, 0.0)
                }
            }
            MotionPattern::Group => {
                let jitter = rng.random_range(-0.1..0.1) * s;
                (
                    100.0 + k as f64 * s,
                    200.0 + (k % 2) as f64 * s * 0.5 + jitter,
                    v,
                    0.2 * v,
                )
            }
        })
        .collect()
}

/// Builds ground truth, detections and features; identical specs give
/// identical output.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let n = spec.objects;
    let basis = DMatrix::from_fn(d, n + 1, |_, _| rng.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let (c, s) = (spec.center_cosine.sqrt(), (1.0 - spec.center_cosine).sqrt());
    let centers: Vec<DVector<f64>> = (0..n).map(|k| basis.column(0) * c + basis.column(k + 1) * s).collect();
    let motion = trajectory(spec, &mut rng);
    let (w, h) = spec.box_size;

    let mut gt = Trajectories::default().with_span(1, spec.frames);
    let mut frames = Vec::with_capacity(spec.frames as usize);
    let noise_scale = spec.feature_noise / (d as f64).sqrt();
    for frame in 1..=spec.frames {
        let t = (frame - 1) as f64;
        let mut dets = Vec::new();
        let mut ids = Vec::new();
        for (k, &(x0, y0, vx, vy)) in motion.iter().enumerate() {
            let truth = BBox::new(x0 + vx * t, y0 + vy * t, w, h);
            gt.push(frame, k as u64 + 1, truth);
            let occ = spec.occlusions.iter().find(|o| o.object == k && o.covers(frame));
            // draw every random number whether or not it is used
            let drop = rng.random::<f64>() < spec.dropout;
            let jitter = (0..4)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * spec.box_jitter)
                .collect::<Vec<_>>();
            let noise = gaussian_vec(&mut rng, d) * noise_scale;
            let junk = gaussian_vec(&mut rng, d);
            if drop || matches!(occ, Some(o) if o.kind == OcclusionKind::Hidden) {
                continue;
            }
            let center = match occ.map(|o| o.kind) {
                Some(OcclusionKind::Corrupted) => junk.normalize(),
                Some(OcclusionKind::Mimic(j)) => centers[j].clone(),
                _ => centers[k].clone(),
            };
            let feature = (center + noise).normalize();
            let bbox = BBox::new(
                truth.cx + jitter[0],
                truth.cy + jitter[1],
                (w + jitter[2]).max(1.0),
                (h + jitter[3]).max(1.0),
            );
            dets.push(Detection {
                bbox,
                confidence: 1.0,
                feature,
            });
            ids.push(k as u64 + 1);
        }
        // detector output order carries no identity information
        for i in (1..dets.len()).rev() {
            let j = rng.random_range(0..=i);
            dets.swap(i, j);
            ids.swap(i, j);
        }
        frames.push(FrameDetections {
            frame,
            detections: dets,
            identities: ids,
        });
    }
    Ok(Scenario {
        spec: spec.clone(),
        gt: GtSequence {
            trajectories: gt,
            camera: spec.camera,
            centers,
            feature_noise: spec.feature_noise,
            occlusions: spec.occlusions.clone(),
        },
        frames,
    })
}

/// Whether each detection overlaps its own ground-truth box by at least
/// `min_iou` and every other box by less, in every frame.
pub fn certify(scenario: &Scenario, min_iou: f64) -> bool {
    scenario.frames.iter().all(|f| {
        let gt = &scenario.gt.trajectories.frames[&f.frame];
        f.detections.iter().zip(&f.identities).all(|(d, id)| {
            gt.iter().all(|(g, b)| {
                if g == id {
                    d.bbox.iou(b) >= min_iou
                } else {
                    d.bbox.iou(b) < min_iou
                }
            })
        })
    })
}

/// Runs the tracking loop over every frame of `scenario`.
pub fn run_tracker(
    scenario: &Scenario,
    config: &TrackerConfig,
    matcher: Matcher,
    net: Option<&MatchNet>,
) -> crate::track::Result<Trajectories> {
    let mut tracker = Tracker::new(config.clone(), matcher)?;
    if let Some(net) = net {
        tracker = tracker.with_net(net.clone());
    }
    for f in &scenario.frames {
        tracker.step(f.frame, &f.detections)?;
    }
    Ok(Trajectories::from_tracks(&tracker.tracks()))
}

fn occluded(mut spec: ScenarioSpec, kind: ScenarioKind, occlusions: Vec<Occlusion>) -> ScenarioSpec {
    spec.kind = kind;
    spec.occlusions = occlusions;
    spec
}

/// Twenty-two scenarios mixing plain motion, crossings, group motion and
/// occlusions.
pub fn standard_suite() -> Vec<ScenarioSpec> {
    use MotionPattern::*;
    let mut out = Vec::new();
    let mut s = ScenarioSpec::new("single", 1, 1, Linear);
    s.feature_noise = 0.0;
    out.push(s);
    let mut s = ScenarioSpec::new("single_noisy", 2, 1, Linear);
    s.feature_noise = 0.3;
    s.box_jitter = 1.0;
    out.push(s);
    for (i, seed) in [3u64, 4].into_iter().enumerate() {
        let mut s = ScenarioSpec::new(&format!("crossing_clean_{i}"), seed, 2, Crossing);
        s.feature_noise = 0.1;
        out.push(s);
    }
    for (i, seed) in [5u64, 6, 7].into_iter().enumerate() {
        let mut s = ScenarioSpec::new(&format!("crossing_similar_{i}"), seed, 4, Crossing);
        s.center_cosine = 0.5;
        s.feature_noise = 0.3;
        s.box_jitter = 1.0;
        out.push(s);
    }
    for (i, seed) in [8u64, 9, 10].into_iter().enumerate() {
        let mut s = ScenarioSpec::new(&format!("linear_{i}"), seed, 4, Linear);
        s.center_cosine = 0.3;
        s.feature_noise = 0.3;
        s.box_jitter = 1.0;
        s.dropout = 0.05;
        out.push(s);
    }
    for (i, seed) in [11u64, 12, 13].into_iter().enumerate() {
        let mut s = ScenarioSpec::new(&format!("group_{i}"), seed, 5, Group);
        s.center_cosine = 0.5;
        s.feature_noise = 0.3;
        s.box_jitter = 1.0;
        out.push(s);
    }
    // dense formations: neighbouring boxes overlap, so overlap tests alone
    // cannot reject a wrong pairing
    let dense = |name: String, seed: u64| {
        let mut s = ScenarioSpec::new(&name, seed, 5, Group);
        s.frames = 80;
        s.spacing = 26.0;
        s.center_cosine = 0.5;
        s.feature_noise = 0.2;
        s
    };
    let occ = |object, kind| Occlusion {
        object,
        start: 25,
        length: 20,
        kind,
    };
    for (i, seed) in [14u64, 15, 16].into_iter().enumerate() {
        let s = dense(format!("group_hidden_{i}"), seed);
        out.push(occluded(
            s,
            ScenarioKind::Occlusion,
            vec![occ(2, OcclusionKind::Hidden)],
        ));
    }
    for (i, seed) in [17u64, 18, 19].into_iter().enumerate() {
        let s = dense(format!("group_corrupted_{i}"), seed);
        out.push(occluded(
            s,
            ScenarioKind::Occlusion,
            vec![occ(2, OcclusionKind::Corrupted)],
        ));
    }
    for (i, seed) in [20u64, 21].into_iter().enumerate() {
        // object 2 passes behind object 3, whose detections now look like 2
        let s = dense(format!("group_mimic_{i}"), seed);
        let o = vec![occ(2, OcclusionKind::Hidden), occ(3, OcclusionKind::Mimic(2))];
        out.push(occluded(s, ScenarioKind::Occlusion, o));
    }
    // visible throughout with one look corrupted, so every frame has a
    // full set of detections and a unique geometric assignment
    let mut s = dense("certified_group_occlusion".into(), 22);
    s.feature_noise = 0.1;
    out.push(occluded(
        s,
        ScenarioKind::Certified,
        vec![occ(2, OcclusionKind::Mimic(3))],
    ));
    out
}

/// One object hidden for `length` frames in a moving group.
pub fn long_occlusion_suite() -> Vec<ScenarioSpec> {
    [(20u32, 31u64), (40, 32), (60, 33)]
        .into_iter()
        .map(|(length, seed)| {
            let mut s = ScenarioSpec::new(&format!("hidden_{length}"), seed, 3, MotionPattern::Group);
            s.frames = 40 + length + 20;
            s.spacing = 80.0;
            s.speed = 1.0;
            s.feature_noise = 0.2;
            let occ = vec![Occlusion {
                object: 1,
                start: 30,
                length,
                kind: OcclusionKind::Hidden,
            }];
            occluded(s, ScenarioKind::Occlusion, occ)
        })
        .collect()
}
