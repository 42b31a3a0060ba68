//! Detection, result, ground-truth and feature files, plus the run
//! configuration.

mod config;
mod features;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::eval::Trajectories;
use crate::geometry::BBox;
use crate::track::Track;

pub use config::{RunConfig, CONFIG_KEYS};
pub use features::{
    attach_features, read_feature_csv, read_feature_file, write_feature_csv, write_feature_file, FeatureRecord,
    FeatureSet, FEATURE_MAGIC, FEATURE_VERSION,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("feature file: {0}")]
    Features(String),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of a MOTChallenge-style detection, ground-truth or result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub frame: u32,
    /// −1 for detections.
    pub id: i64,
    /// Top-left corner and size, pixels.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl DetectionRecord {
    pub fn bbox(&self) -> BBox {
        BBox::from_tlwh(self.x, self.y, self.w, self.h)
    }
}

/// Parses `frame,id,x,y,w,h,conf[,…]` lines (7 to 10 fields). Blank lines
/// are skipped. Records are sorted by frame, keeping line order.
pub fn parse_detections_str(text: &str) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let bad = |reason: String| IoError::Malformed { line, reason };
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if !(7..=10).contains(&fields.len()) {
            return Err(bad(format!("expected 7 to 10 fields, found {}", fields.len())));
        }
        let frame: u32 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad frame {:?}", fields[0])))?;
        if frame < 1 {
            return Err(bad("frame must be at least 1".into()));
        }
        let id: i64 = fields[1]
            .parse::<i64>()
            .or_else(|_| {
                fields[1]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0)
                    .map(|v| v as i64)
                    .ok_or(())
            })
            .map_err(|_| bad(format!("bad id {:?}", fields[1])))?;
        let mut num = [0.0; 5];
        for (slot, s) in num.iter_mut().zip(&fields[2..7]) {
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad number {s:?}")))?;
        }
        let [x, y, w, h, confidence] = num;
        if !(w > 0.0 && h > 0.0) {
            return Err(bad("width and height must be positive".into()));
        }
        out.push(DetectionRecord {
            frame,
            id,
            x,
            y,
            w,
            h,
            confidence,
        });
    }
    out.sort_by_key(|r| r.frame);
    Ok(out)
}

pub fn parse_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_detections_str(&fs::read_to_string(path).map_err(io_err(path))?)
}

fn format_record(r: &DetectionRecord) -> String {
    // `{}` prints the shortest decimal that parses back to the same f64
    format!(
        "{},{},{},{},{},{},{},-1,-1,-1",
        r.frame, r.id, r.x, r.y, r.w, r.h, r.confidence
    )
}

pub fn format_records(records: &[DetectionRecord]) -> String {
    records.iter().map(|r| format_record(r) + "\n").collect()
}

/// One record per (frame, track), sorted by frame then id, confidence 1.
pub fn result_records(tracks: &[Track]) -> Vec<DetectionRecord> {
    let mut out: Vec<DetectionRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.history.iter().map(move |e| {
                let [x, y, w, h] = e.bbox.to_tlwh();
                DetectionRecord {
                    frame: e.frame,
                    id: t.id as i64,
                    x,
                    y,
                    w,
                    h,
                    confidence: 1.0,
                }
            })
        })
        .collect();
    out.sort_by_key(|r| (r.frame, r.id));
    out
}

/// Writes the result file and, when any entry is interpolated, a sidecar
/// `<path>.synthetic` listing `frame,id` of those entries.
pub fn write_results(tracks: &[Track], path: &Path) -> Result<()> {
    fs::write(path, format_records(&result_records(tracks))).map_err(io_err(path))?;
    let mut synthetic: Vec<(u32, u64)> = tracks
        .iter()
        .flat_map(|t| t.history.iter().filter(|e| e.synthetic).map(move |e| (e.frame, t.id)))
        .collect();
    let side = sidecar_path(path);
    if synthetic.is_empty() {
        if side.exists() {
            fs::remove_file(&side).map_err(io_err(&side))?;
        }
        return Ok(());
    }
    synthetic.sort_unstable();
    let mut f = fs::File::create(&side).map_err(io_err(&side))?;
    for (frame, id) in synthetic {
        writeln!(f, "{frame},{id}").map_err(io_err(&side))?;
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".synthetic");
    PathBuf::from(s)
}

/// Records with id ≥ 1 as trajectories.
pub fn records_to_trajectories(records: &[DetectionRecord]) -> Trajectories {
    let mut t = Trajectories::default();
    for r in records.iter().filter(|r| r.id >= 1) {
        t.push(r.frame, r.id as u64, r.bbox());
    }
    t
}

/// Ground truth with its frame span taken from the file.
pub fn parse_ground_truth(path: &Path) -> Result<Trajectories> {
    let t = records_to_trajectories(&parse_detections(path)?);
    let span = t.range();
    Ok(t.with_span(span.0, span.1))
}

pub fn trajectories_to_records(t: &Trajectories) -> Vec<DetectionRecord> {
    t.frames
        .iter()
        .flat_map(|(&frame, v)| {
            v.iter().map(move |(id, b)| {
                let [x, y, w, h] = b.to_tlwh();
                DetectionRecord {
                    frame,
                    id: *id as i64,
                    x,
                    y,
                    w,
                    h,
                    confidence: 1.0,
                }
            })
        })
        .collect()
}

/// Per-frame 2×3 affine warps, one `frame,a11,a12,tx,a21,a22,ty` per line.
pub fn parse_warps(path: &Path) -> Result<std::collections::BTreeMap<u32, nalgebra::Matrix2x3<f64>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = std::collections::BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let bad = |reason: &str| IoError::Malformed {
            line: k + 1,
            reason: reason.into(),
        };
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad("expected frame and six coefficients"));
        }
        let frame: u32 = f[0].parse().map_err(|_| bad("bad frame"))?;
        let mut c = [0.0; 6];
        for (slot, s) in c.iter_mut().zip(&f[1..]) {
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("bad coefficient"))?;
        }
        out.insert(frame, nalgebra::Matrix2x3::new(c[0], c[1], c[2], c[3], c[4], c[5]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_field_mapping() {
        let r = parse_detections_str("1,-1,10,20,30,40,0.9,-1,-1,-1").unwrap();
        assert_eq!(
            r,
            vec![DetectionRecord {
                frame: 1,
                id: -1,
                x: 10.0,
                y: 20.0,
                w: 30.0,
                h: 40.0,
                confidence: 0.9
            }]
        );
        let b = r[0].bbox();
        assert_eq!((b.cx, b.cy, b.w, b.h), (25.0, 40.0, 30.0, 40.0));
    }

    #[test]
    fn empty_input() {
        assert!(parse_detections_str("").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_number() {
        let text = "1,-1,0,0,1,1,1,-1,-1,-1\n2,-1,0,0,1,1,1,-1,-1,-1\n3,-1,0,0,1,1\n";
        match parse_detections_str(text) {
            Err(IoError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_detections_str("1,-1,0,0,0,1,1"),
            Err(IoError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn sorted_by_frame_stably() {
        let text = "2,-1,0,0,1,1,0.1\n1,-1,0,0,1,1,0.2\n2,-1,0,0,1,1,0.3\n";
        let r = parse_detections_str(text).unwrap();
        assert_eq!(r.iter().map(|r| r.confidence).collect::<Vec<_>>(), vec![0.2, 0.1, 0.3]);
    }

    #[test]
    fn format_round_trip() {
        let recs = vec![DetectionRecord {
            frame: 7,
            id: 3,
            x: 0.1 + 0.2,
            y: -1.0 / 3.0,
            w: 1e-7,
            h: 123456.789,
            confidence: 1.0,
        }];
        assert_eq!(parse_detections_str(&format_records(&recs)).unwrap(), recs);
    }
}
