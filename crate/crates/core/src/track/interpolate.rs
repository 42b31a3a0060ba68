use super::{HistoryEntry, Track};

/// Fills every intra-track frame gap with linearly interpolated boxes,
/// marked `synthetic`. Existing entries are untouched.
pub fn interpolate_tracks(tracks: &[Track]) -> Vec<Track> {
    tracks
        .iter()
        .map(|t| {
            let mut out = t.clone();
            let mut filled = Vec::with_capacity(t.history.len());
            for pair in t.history.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                filled.push(a.clone());
                let span = b.frame - a.frame;
                for k in 1..span {
                    filled.push(HistoryEntry {
                        frame: a.frame + k,
                        bbox: a.bbox.lerp(&b.bbox, k as f64 / span as f64),
                        appearance: None,
                        synthetic: true,
                    });
                }
            }
            if let Some(last) = t.history.last() {
                filled.push(last.clone());
            }
            out.history = filled;
            out
        })
        .collect()
}
