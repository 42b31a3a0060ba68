//! Per-detection appearance features.
//!
//! Binary layout, little endian: magic `GMTFEAT\0`, u32 version, u32 width
//! `d`, u64 record count, then per record u32 frame, u32 index of the
//! detection within its frame, and `d` f32 values.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use super::{io_err, DetectionRecord, IoError, Result};
use crate::track::Detection;

pub const FEATURE_MAGIC: &[u8; 8] = b"GMTFEAT\0";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub frame: u32,
    pub index: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
}

fn bad(msg: impl Into<String>) -> IoError {
    IoError::Features(msg.into())
}

impl FeatureSet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(24 + self.records.len() * (8 + 4 * self.dim));
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            if r.values.len() != self.dim {
                return Err(bad(format!(
                    "record ({}, {}) has width {}",
                    r.frame,
                    r.index,
                    r.values.len()
                )));
            }
            out.extend_from_slice(&r.frame.to_le_bytes());
            out.extend_from_slice(&r.index.to_le_bytes());
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != FEATURE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dim = u32_at(take(4)?) as usize;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let frame = u32_at(take(4)?);
            let index = u32_at(take(4)?);
            let raw = take(4 * dim)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push(FeatureRecord { frame, index, values });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after the last record"));
        }
        Ok(Self { dim, records })
    }
}

pub fn write_feature_file(set: &FeatureSet, path: &Path) -> Result<()> {
    fs::write(path, set.to_bytes()?).map_err(io_err(path))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSet> {
    FeatureSet::from_bytes(&fs::read(path).map_err(io_err(path))?)
}

/// Text fallback: `frame,index,v1,…,vd` per line.
pub fn write_feature_csv(set: &FeatureSet, path: &Path) -> Result<()> {
    let mut s = String::new();
    for r in &set.records {
        s += &format!("{},{}", r.frame, r.index);
        for v in &r.values {
            s += &format!(",{v}");
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureSet> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut set = FeatureSet::default();
    for (k, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let mal = |reason: &str| IoError::Malformed {
            line: k + 1,
            reason: reason.into(),
        };
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() < 3 {
            return Err(mal("expected frame, index and at least one value"));
        }
        let frame = f[0].parse().map_err(|_| mal("bad frame"))?;
        let index = f[1].parse().map_err(|_| mal("bad index"))?;
        let values: Vec<f32> = f[2..]
            .iter()
            .map(|s| s.parse::<f32>().map_err(|_| mal("bad value")))
            .collect::<Result<_>>()?;
        if set.records.is_empty() {
            set.dim = values.len();
        } else if values.len() != set.dim {
            return Err(mal("feature width differs from the first line"));
        }
        set.records.push(FeatureRecord { frame, index, values });
    }
    Ok(set)
}

/// Pairs every detection with its feature row. The index of a detection is
/// its position among the detections of its frame, in file order.
pub fn attach_features(dets: &[DetectionRecord], feats: &FeatureSet) -> Result<BTreeMap<u32, Vec<Detection>>> {
    let mut rows: HashMap<(u32, u32), &FeatureRecord> = HashMap::with_capacity(feats.records.len());
    for r in &feats.records {
        if r.values.len() != feats.dim {
            return Err(bad(format!("record ({}, {}) has the wrong width", r.frame, r.index)));
        }
        if rows.insert((r.frame, r.index), r).is_some() {
            return Err(bad(format!(
                "duplicate feature for frame {} index {}",
                r.frame, r.index
            )));
        }
    }
    let mut out: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        let list = out.entry(d.frame).or_default();
        let key = (d.frame, list.len() as u32);
        let r = rows
            .remove(&key)
            .ok_or_else(|| bad(format!("no feature for frame {} index {}", key.0, key.1)))?;
        list.push(Detection {
            bbox: d.bbox(),
            confidence: d.confidence,
            feature: DVector::from_iterator(feats.dim, r.values.iter().map(|&v| v as f64)),
        });
    }
    if let Some(((f, i), _)) = rows.iter().min_by_key(|(k, _)| **k) {
        return Err(bad(format!("feature for frame {f} index {i} has no detection")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> FeatureSet {
        FeatureSet {
            dim: 2,
            records: vec![
                FeatureRecord {
                    frame: 1,
                    index: 0,
                    values: vec![1.0, 0.5],
                },
                FeatureRecord {
                    frame: 1,
                    index: 1,
                    values: vec![-0.25, 3.0],
                },
            ],
        }
    }

    fn det(frame: u32) -> DetectionRecord {
        DetectionRecord {
            frame,
            id: -1,
            x: 0.0,
            y: 0.0,
            w: 1.0,
            h: 1.0,
            confidence: 1.0,
        }
    }

    #[test]
    fn binary_round_trip() {
        let s = set();
        let b = s.to_bytes().unwrap();
        assert_eq!(&b[..8], FEATURE_MAGIC);
        assert_eq!(b.len(), 24 + 2 * (8 + 8));
        assert_eq!(FeatureSet::from_bytes(&b).unwrap(), s);
        assert!(FeatureSet::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(FeatureSet::from_bytes(&bad).is_err());
    }

    #[test]
    fn every_detection_needs_one_row() {
        let s = set();
        let m = attach_features(&[det(1), det(1)], &s).unwrap();
        assert_eq!(m[&1][1].feature[1], 3.0);
        assert!(attach_features(&[det(1)], &s).is_err());
        assert!(attach_features(&[det(1), det(1), det(1)], &s).is_err());
    }
}
