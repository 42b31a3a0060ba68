use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;

use super::{EvalError, Result, Trajectories};
use crate::track::{hungarian, hungarian_max};

/// Mostly-tracked and mostly-lost coverage thresholds.
pub const MOSTLY_TRACKED: f64 = 0.8;
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClearMot {
    pub num_gt: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub id_switches: usize,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub num_gt_ids: usize,
    /// Mean IoU of matched pairs.
    pub motp: f64,
}

impl ClearMot {
    pub fn mota(&self) -> f64 {
        1.0 - (self.fp + self.fn_ + self.id_switches) as f64 / self.num_gt.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdMeasures {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl IdMeasures {
    /// `2·IDTP / (2·IDTP + IDFP + IDFN)`; 1 when both sides are empty.
    pub fn idf1(&self) -> f64 {
        let den = 2 * self.idtp + self.idfp + self.idfn;
        if den == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / den as f64
        }
    }

    pub fn idp(&self) -> f64 {
        ratio(self.idtp, self.idtp + self.idfp)
    }

    pub fn idr(&self) -> f64 {
        ratio(self.idtp, self.idtp + self.idfn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_range(gt: &Trajectories, hyp: &Trajectories) -> Result<()> {
    let (lo, hi) = gt.range();
    if let (Some(&f0), Some(&f1)) = (hyp.frames.keys().next(), hyp.frames.keys().next_back()) {
        if f0 < lo || f1 > hi {
            return Err(EvalError::FrameRangeMismatch {
                gt: (lo, hi),
                hyp: (f0, f1),
            });
        }
    }
    Ok(())
}

fn iou_table(gt: &[(u64, crate::geometry::BBox)], hyp: &[(u64, crate::geometry::BBox)]) -> DMatrix<f64> {
    DMatrix::from_fn(gt.len(), hyp.len(), |i, j| gt[i].1.iou(&hyp[j].1))
}

/// CLEAR-MOT counts. Per frame, correspondences from the previous matched
/// frame of each ground-truth id are kept if they still overlap by at least
/// `iou_threshold`; the rest are assigned with a maximum-IoU Hungarian step.
/// An ID switch is counted when an object is matched to a different
/// hypothesis than at its last match.
pub fn clear_mot(gt: &Trajectories, hyp: &Trajectories, iou_threshold: f64) -> Result<ClearMot> {
    check_range(gt, hyp)?;
    let mut out = ClearMot::default();
    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut present: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    let mut iou_sum = 0.0;
    let empty = Vec::new();
    let (lo, hi) = gt.range();
    for frame in lo..=hi {
        let g = gt.frames.get(&frame).unwrap_or(&empty);
        let h = hyp.frames.get(&frame).unwrap_or(&empty);
        let iou = iou_table(g, h);
        let mut g_match: Vec<Option<usize>> = vec![None; g.len()];
        let mut h_used = vec![false; h.len()];
        for (i, (gid, _)) in g.iter().enumerate() {
            if let Some(prev) = last.get(gid) {
                if let Some(j) = h.iter().position(|(hid, _)| hid == prev) {
                    if !h_used[j] && iou[(i, j)] >= iou_threshold {
                        g_match[i] = Some(j);
                        h_used[j] = true;
                    }
                }
            }
        }
        let free_g: Vec<usize> = (0..g.len()).filter(|&i| g_match[i].is_none()).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|&j| !h_used[j]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let cost = DMatrix::from_fn(free_g.len(), free_h.len(), |a, b| {
                let v = iou[(free_g[a], free_h[b])];
                if v >= iou_threshold {
                    1.0 - v
                } else {
                    f64::INFINITY
                }
            });
            for (a, b) in hungarian(&cost) {
                let (i, j) = (free_g[a], free_h[b]);
                if iou[(i, j)] >= iou_threshold {
                    g_match[i] = Some(j);
                    h_used[j] = true;
                    if let Some(prev) = last.get(&g[i].0) {
                        if *prev != h[j].0 {
                            out.id_switches += 1;
                        }
                    }
                }
            }
        }
        for (i, (gid, _)) in g.iter().enumerate() {
            let e = present.entry(*gid).or_default();
            e.0 += 1;
            if let Some(j) = g_match[i] {
                e.1 += 1;
                out.matches += 1;
                iou_sum += iou[(i, j)];
                last.insert(*gid, h[j].0);
            } else {
                out.fn_ += 1;
            }
        }
        out.num_gt += g.len();
        out.fp += h_used.iter().filter(|u| !**u).count();
    }
    out.num_gt_ids = present.len();
    for (total, tracked) in present.values() {
        let cov = *tracked as f64 / *total as f64;
        if cov >= MOSTLY_TRACKED {
            out.mostly_tracked += 1;
        } else if cov < MOSTLY_LOST {
            out.mostly_lost += 1;
        } else {
            out.partially_tracked += 1;
        }
    }
    out.motp = if out.matches > 0 {
        iou_sum / out.matches as f64
    } else {
        0.0
    };
    Ok(out)
}

/// Identity measures from a one-to-one matching of whole ground-truth
/// trajectories to whole hypothesis trajectories that maximizes the number
/// of co-occurring frames with IoU ≥ `iou_threshold`.
pub fn id_measures(gt: &Trajectories, hyp: &Trajectories, iou_threshold: f64) -> Result<IdMeasures> {
    check_range(gt, hyp)?;
    let gids: Vec<u64> = gt.ids().into_iter().collect();
    let hids: Vec<u64> = hyp.ids().into_iter().collect();
    let gi: HashMap<u64, usize> = gids.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let hi: HashMap<u64, usize> = hids.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let mut overlap = DMatrix::<f64>::zeros(gids.len(), hids.len());
    let empty = Vec::new();
    for (frame, g) in &gt.frames {
        let h = hyp.frames.get(frame).unwrap_or(&empty);
        for (gid, gb) in g {
            for (hid, hb) in h {
                if gb.iou(hb) >= iou_threshold {
                    overlap[(gi[gid], hi[hid])] += 1.0;
                }
            }
        }
    }
    let idtp: usize = hungarian_max(&overlap)
        .into_iter()
        .map(|(i, j)| overlap[(i, j)] as usize)
        .sum();
    let (ng, nh) = (gt.num_boxes(), hyp.num_boxes());
    Ok(IdMeasures {
        idtp,
        idfp: nh - idtp,
        idfn: ng - idtp,
    })
}

/// IDF1 together with its counts.
pub fn idf1(gt: &Trajectories, hyp: &Trajectories, iou_threshold: f64) -> Result<(f64, IdMeasures)> {
    let m = id_measures(gt, hyp, iou_threshold)?;
    Ok((m.idf1(), m))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub name: String,
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub id_switches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub num_gt: usize,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub num_gt_ids: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl MetricReport {
    pub fn from_parts(name: &str, mot: &ClearMot, ids: &IdMeasures) -> Self {
        Self {
            name: name.to_string(),
            mota: mot.mota(),
            motp: mot.motp,
            idf1: ids.idf1(),
            id_switches: mot.id_switches,
            fp: mot.fp,
            fn_: mot.fn_,
            num_gt: mot.num_gt,
            mostly_tracked: mot.mostly_tracked,
            partially_tracked: mot.partially_tracked,
            mostly_lost: mot.mostly_lost,
            num_gt_ids: mot.num_gt_ids,
            idtp: ids.idtp,
            idfp: ids.idfp,
            idfn: ids.idfn,
        }
    }

    /// Totals over sequences, with MOTA and IDF1 recomputed from the sums.
    pub fn aggregate(name: &str, reports: &[MetricReport]) -> Self {
        let mut mot = ClearMot::default();
        let mut ids = IdMeasures::default();
        let mut iou_sum = 0.0;
        for r in reports {
            mot.num_gt += r.num_gt;
            mot.fp += r.fp;
            mot.fn_ += r.fn_;
            mot.id_switches += r.id_switches;
            mot.mostly_tracked += r.mostly_tracked;
            mot.partially_tracked += r.partially_tracked;
            mot.mostly_lost += r.mostly_lost;
            mot.num_gt_ids += r.num_gt_ids;
            let matched = r.num_gt - r.fn_;
            mot.matches += matched;
            iou_sum += r.motp * matched as f64;
            ids.idtp += r.idtp;
            ids.idfp += r.idfp;
            ids.idfn += r.idfn;
        }
        mot.motp = if mot.matches > 0 {
            iou_sum / mot.matches as f64
        } else {
            0.0
        };
        Self::from_parts(name, &mot, &ids)
    }

    /// One `key=value` line.
    pub fn to_kv(&self) -> String {
        format!(
            "name={} mota={:.6} motp={:.6} idf1={:.6} idsw={} fp={} fn={} gt={} mt={} pt={} ml={} ids={} idtp={} idfp={} idfn={}",
            self.name,
            self.mota,
            self.motp,
            self.idf1,
            self.id_switches,
            self.fp,
            self.fn_,
            self.num_gt,
            self.mostly_tracked,
            self.partially_tracked,
            self.mostly_lost,
            self.num_gt_ids,
            self.idtp,
            self.idfp,
            self.idfn
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<28} {:>7} {:>7} {:>5} {:>6} {:>6} {:>4} {:>4}",
            "sequence", "MOTA", "IDF1", "IDSW", "FP", "FN", "MT", "ML"
        )
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:>7.3} {:>7.3} {:>5} {:>6} {:>6} {:>4} {:>4}",
            self.name, self.mota, self.idf1, self.id_switches, self.fp, self.fn_, self.mostly_tracked, self.mostly_lost
        )
    }
}

/// CLEAR-MOT plus identity measures for one sequence.
pub fn evaluate(name: &str, gt: &Trajectories, hyp: &Trajectories, iou_threshold: f64) -> Result<MetricReport> {
    let mot = clear_mot(gt, hyp, iou_threshold)?;
    let ids = id_measures(gt, hyp, iou_threshold)?;
    Ok(MetricReport::from_parts(name, &mot, &ids))
}
