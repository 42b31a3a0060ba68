use nalgebra::DMatrix;

use super::{MatchError, Result};

/// Koopmans–Beckmann objective `½‖A₁Π − ΠA₂‖²_F − tr(BᵀΠ)` for the
/// permutation `Π[i, perm[i]] = 1`.
pub fn kb_objective(adj1: &DMatrix<f64>, adj2: &DMatrix<f64>, vertex: &DMatrix<f64>, perm: &[usize]) -> Result<f64> {
    let n = perm.len();
    for (name, m) in [("A1", adj1), ("A2", adj2), ("B", vertex)] {
        if m.shape() != (n, n) {
            return Err(MatchError::DimensionMismatch(format!(
                "{name} is {}x{}, permutation has {n} entries",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(MatchError::DimensionMismatch(format!("{perm:?} is not a permutation")));
        }
    }
    let mut pi = DMatrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        pi[(i, j)] = 1.0;
    }
    let diff = adj1 * &pi - &pi * adj2;
    Ok(0.5 * diff.norm_squared() - vertex.transpose().component_mul(&pi.transpose()).sum())
}
