//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown and repeated keys
//! are errors. Command-line overrides go through [`RunConfig::set`].

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{io_err, IoError, Result};
use crate::net::{AggregationMode, GcnConfig, TrainConfig};
use crate::track::{CameraMotion, KalmanConfig, Matcher, TrackerConfig};

/// Every key with its default and a short description.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for every random choice"),
    ("tracker.kappa", "9.4877", "squared Mahalanobis gate"),
    (
        "tracker.sigma",
        "auto",
        "appearance threshold; auto = 0.7 static, 0.6 moving",
    ),
    ("tracker.delta", "100", "frames a track may go unmatched"),
    (
        "tracker.iou_fallback_min",
        "0.3",
        "minimum IoU of the fallback assignment",
    ),
    ("tracker.camera", "moving", "static | moving"),
    ("tracker.interpolate", "false", "fill track gaps linearly"),
    ("tracker.aggregation", "mean", "mean | last | ema:<alpha>"),
    ("tracker.matcher", "gm", "gm | hungarian"),
    ("kalman.std_position", "0.05", "position noise per unit box height"),
    ("kalman.std_velocity", "0.00625", "velocity noise per unit box height"),
    ("match.tau", "0.001", "softmax temperature"),
    ("qp.tol", "1e-8", "interior point KKT tolerance"),
    ("qp.max_iter", "100", "interior point iteration cap"),
    ("train.learning_rate", "5e-5", "AdamW step size"),
    ("train.weight_decay", "1e-5", "AdamW decoupled weight decay"),
    ("train.beta1", "0.9", "AdamW first moment decay"),
    ("train.beta2", "0.999", "AdamW second moment decay"),
    ("train.eps", "1e-8", "AdamW denominator offset"),
    ("train.tau", "0.001", "softmax temperature during training"),
    ("train.epochs", "1", "passes over the samples"),
    ("train.max_history", "8", "features kept per training tracklet"),
    (
        "train.label_iou",
        "0.5",
        "IoU needed to label a detection from ground truth",
    ),
    ("gcn.use_geometry", "false", "add box IoU to the cross-graph weights"),
    ("gcn.num_layers", "1", "cross-graph message passing rounds"),
    ("net.hidden", "32", "MLP hidden width"),
    ("net.out_dim", "32", "encoded feature width"),
    ("path.det", "", "detection file"),
    ("path.feat", "", "feature file"),
    ("path.feat_format", "bin", "bin | csv"),
    ("path.gt", "", "ground truth file"),
    ("path.out", "", "result file"),
    ("path.checkpoint", "", "network weights"),
    ("path.warps", "", "per-frame camera warps"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub tracker: TrackerConfig,
    /// Explicit σ; `None` follows the camera flag.
    pub sigma: Option<f64>,
    pub matcher: Matcher,
    pub train: TrainConfig,
    pub max_history: usize,
    pub label_iou: f64,
    pub gcn: GcnConfig,
    pub hidden: usize,
    pub out_dim: usize,
    pub det: Option<PathBuf>,
    pub feat: Option<PathBuf>,
    pub feat_csv: bool,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub warps: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tracker: TrackerConfig::default(),
            sigma: None,
            matcher: Matcher::GraphMatching,
            train: TrainConfig::default(),
            max_history: 8,
            label_iou: 0.5,
            gcn: GcnConfig::default(),
            hidden: 32,
            out_dim: 32,
            det: None,
            feat: None,
            feat_csv: false,
            gt: None,
            out: None,
            checkpoint: None,
            warps: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| IoError::Config(format!("{key}: cannot parse {value:?}")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| IoError::Malformed {
                line: k + 1,
                reason: "expected key = value".into(),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(IoError::Config(format!("line {}: {key} set twice", k + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| IoError::Config(format!("line {}: {}", k + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| IoError::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.tracker;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "tracker.kappa" => t.kappa = parse(key, value)?,
            "tracker.sigma" => {
                self.sigma = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "tracker.delta" => t.delta = parse(key, value)?,
            "tracker.iou_fallback_min" => t.iou_fallback_min = parse(key, value)?,
            "tracker.camera" => {
                t.camera_motion = match value {
                    "static" => CameraMotion::Static,
                    "moving" => CameraMotion::Moving,
                    _ => return Err(IoError::Config(format!("{key}: expected static or moving"))),
                }
            }
            "tracker.interpolate" => t.interpolate = parse(key, value)?,
            "tracker.aggregation" => {
                t.aggregation = AggregationMode::from_str(value).map_err(|e| IoError::Config(format!("{key}: {e}")))?
            }
            "tracker.matcher" => {
                self.matcher = match value {
                    "gm" => Matcher::GraphMatching,
                    "hungarian" => Matcher::HungarianOnAffinity,
                    _ => return Err(IoError::Config(format!("{key}: expected gm or hungarian"))),
                }
            }
            "kalman.std_position" => t.kalman.std_position = parse(key, value)?,
            "kalman.std_velocity" => t.kalman.std_velocity = parse(key, value)?,
            "match.tau" => t.matching.tau = parse(key, value)?,
            "qp.tol" => t.matching.solver.tol = parse(key, value)?,
            "qp.max_iter" => t.matching.solver.max_iter = parse(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, value)?,
            "train.beta1" => self.train.beta1 = parse(key, value)?,
            "train.beta2" => self.train.beta2 = parse(key, value)?,
            "train.eps" => self.train.eps = parse(key, value)?,
            "train.tau" => self.train.tau = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.max_history" => self.max_history = parse(key, value)?,
            "train.label_iou" => self.label_iou = parse(key, value)?,
            "gcn.use_geometry" => self.gcn.use_geometry = parse(key, value)?,
            "gcn.num_layers" => self.gcn.num_layers = parse(key, value)?,
            "net.hidden" => self.hidden = parse(key, value)?,
            "net.out_dim" => self.out_dim = parse(key, value)?,
            "path.det" => self.det = path(value),
            "path.feat" => self.feat = path(value),
            "path.feat_format" => {
                self.feat_csv = match value {
                    "bin" => false,
                    "csv" => true,
                    _ => return Err(IoError::Config(format!("{key}: expected bin or csv"))),
                }
            }
            "path.gt" => self.gt = path(value),
            "path.out" => self.out = path(value),
            "path.checkpoint" => self.checkpoint = path(value),
            "path.warps" => self.warps = path(value),
            _ => return Err(IoError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of `key` in the same syntax `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.tracker;
        Some(match key {
            "seed" => self.seed.to_string(),
            "tracker.kappa" => t.kappa.to_string(),
            "tracker.sigma" => self.sigma.map_or("auto".into(), |s| s.to_string()),
            "tracker.delta" => t.delta.to_string(),
            "tracker.iou_fallback_min" => t.iou_fallback_min.to_string(),
            "tracker.camera" => match t.camera_motion {
                CameraMotion::Static => "static".into(),
                CameraMotion::Moving => "moving".into(),
            },
            "tracker.interpolate" => t.interpolate.to_string(),
            "tracker.aggregation" => t.aggregation.to_string(),
            "tracker.matcher" => match self.matcher {
                Matcher::GraphMatching => "gm".into(),
                Matcher::HungarianOnAffinity => "hungarian".into(),
            },
            "kalman.std_position" => t.kalman.std_position.to_string(),
            "kalman.std_velocity" => t.kalman.std_velocity.to_string(),
            "match.tau" => t.matching.tau.to_string(),
            "qp.tol" => t.matching.solver.tol.to_string(),
            "qp.max_iter" => t.matching.solver.max_iter.to_string(),
            "train.learning_rate" => self.train.learning_rate.to_string(),
            "train.weight_decay" => self.train.weight_decay.to_string(),
            "train.beta1" => self.train.beta1.to_string(),
            "train.beta2" => self.train.beta2.to_string(),
            "train.eps" => self.train.eps.to_string(),
            "train.tau" => self.train.tau.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.max_history" => self.max_history.to_string(),
            "train.label_iou" => self.label_iou.to_string(),
            "gcn.use_geometry" => self.gcn.use_geometry.to_string(),
            "gcn.num_layers" => self.gcn.num_layers.to_string(),
            "net.hidden" => self.hidden.to_string(),
            "net.out_dim" => self.out_dim.to_string(),
            "path.det" => show_path(&self.det),
            "path.feat" => show_path(&self.feat),
            "path.feat_format" => if self.feat_csv { "csv" } else { "bin" }.into(),
            "path.gt" => show_path(&self.gt),
            "path.out" => show_path(&self.out),
            "path.checkpoint" => show_path(&self.checkpoint),
            "path.warps" => show_path(&self.warps),
            _ => return None,
        })
    }

    /// The whole configuration as a file `parse_str` reads back.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|(k, _, _)| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Tracker settings with σ resolved from the camera flag when unset.
    pub fn tracker_config(&self) -> Result<TrackerConfig> {
        let mut t = self.tracker.clone();
        t.sigma = self.sigma.unwrap_or_else(|| t.camera_motion.default_sigma());
        t.validate().map_err(|e| IoError::Config(e.to_string()))?;
        Ok(t)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = self.train;
        c.seed = self.seed;
        c.validate().map_err(|e| IoError::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn gcn_config(&self) -> GcnConfig {
        self.gcn
    }

    pub fn kalman_config(&self) -> KalmanConfig {
        self.tracker.kalman
    }
}

fn strip(e: IoError) -> String {
    match e {
        IoError::Config(s) => s,
        other => other.to_string(),
    }
}
