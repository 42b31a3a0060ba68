use nalgebra::{DMatrix, DVector};

/// Indices (ascending) of a maximal linearly independent subset of the rows
/// of `a`, chosen by Gram–Schmidt QR with column pivoting on `aᵀ`.
///
/// A row is kept while its remaining norm exceeds `tol · max(1, largest row
/// norm)`.
pub fn independent_rows(a: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let p = a.nrows();
    if p == 0 {
        return Vec::new();
    }
    let mut residual: Vec<DVector<f64>> = (0..p).map(|r| a.row(r).transpose()).collect();
    let scale = residual.iter().map(|v| v.norm()).fold(0.0_f64, f64::max).max(1.0);
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        // Pivot: largest remaining norm, lowest index on ties.
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &i), (_, &j)| {
                residual[i]
                    .norm()
                    .partial_cmp(&residual[j].norm())
                    .unwrap()
                    .then(j.cmp(&i))
            })
            .unwrap();
        let norm = residual[best].norm();
        if norm <= tol * scale {
            break;
        }
        let q = &residual[best] / norm;
        remaining.swap_remove(pos);
        for &r in &remaining {
            let proj = q.dot(&residual[r]);
            residual[r] -= &q * proj;
        }
        kept.push(best);
    }
    kept.sort_unstable();
    kept
}

pub(crate) fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
}

pub(crate) fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |r, _| v[rows[r]])
}

pub(crate) fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    if q.nrows() == 0 {
        return 0.0;
    }
    q.clone().symmetric_eigen().eigenvalues.min()
}

/// Solve a square system by LU with partial pivoting. Returns `None` for a
/// singular matrix or a non-finite result.
pub(crate) fn lu_solve(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let sol = k.clone().lu().solve(rhs)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}
