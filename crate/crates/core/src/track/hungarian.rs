//! Kuhn–Munkres with row and column potentials, O(n²m).

use nalgebra::DMatrix;

/// Substitute for non-finite costs.
const BIG: f64 = 1e15;

/// Minimum-cost one-to-one assignment covering the smaller side. Returns
/// `(row, col)` pairs sorted by row. Non-finite costs are treated as a very
/// large cost.
pub fn hungarian(costs: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (nr, nc) = costs.shape();
    if nr == 0 || nc == 0 {
        return Vec::new();
    }
    let clean = costs.map(|c| if c.is_finite() { c } else { BIG });
    if nr > nc {
        let mut out: Vec<_> = solve(&clean.transpose()).into_iter().map(|(c, r)| (r, c)).collect();
        out.sort_unstable();
        return out;
    }
    solve(&clean)
}

/// Maximum-total assignment.
pub fn hungarian_max(values: &DMatrix<f64>) -> Vec<(usize, usize)> {
    hungarian(&(-values))
}

// rows ≤ cols
fn solve(a: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (n, m) = a.shape();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<_> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    out.sort_unstable();
    out
}
