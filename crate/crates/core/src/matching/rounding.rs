use nalgebra::DMatrix;

/// `(detection, tracklet)` pairs, sorted by detection.
pub type Assignment = Vec<(usize, usize)>;

/// Repeatedly take the global maximum of `X`, strike its row and column,
/// and stop once no positive entry is left. Exact ties go to the lowest
/// `(row, col)`.
pub fn greedy_round(x: &DMatrix<f64>) -> Assignment {
    let (nr, nc) = x.shape();
    let mut row_free = vec![true; nr];
    let mut col_free = vec![true; nc];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..nr).filter(|&i| row_free[i]) {
            for j in (0..nc).filter(|&j| col_free[j]) {
                let v = x[(i, j)];
                if v > 0.0 && best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        row_free[i] = false;
        col_free[j] = false;
        out.push((i, j));
    }
    out.sort_unstable();
    out
}
