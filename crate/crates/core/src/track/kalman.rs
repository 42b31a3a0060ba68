//! Constant-velocity Kalman filter in `(x, y, aspect, height)` space.

use nalgebra::{Matrix2x3, Matrix4, SMatrix, SVector, Vector4};

use super::{Result, TrackError};
use crate::geometry::BBox;

pub type Mean = SVector<f64, 8>;
pub type Covariance = SMatrix<f64, 8, 8>;

/// Squared-Mahalanobis gate at the 0.95 quantile of χ² with 4 degrees of
/// freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// Position noise as a fraction of box height.
    pub std_position: f64,
    /// Velocity noise as a fraction of box height.
    pub std_velocity: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            std_position: 1.0 / 20.0,
            std_velocity: 1.0 / 160.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// `(x, y, a, h, ẋ, ẏ, ȧ, ḣ)`.
    pub mean: Mean,
    pub covariance: Covariance,
}

pub fn measurement(b: &BBox) -> Vector4<f64> {
    Vector4::new(b.cx, b.cy, b.w / b.h, b.h)
}

fn transition() -> Covariance {
    let mut f = Covariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn diag8(std: [f64; 8]) -> Covariance {
    Covariance::from_diagonal(&Mean::from_iterator(std.iter().map(|s| s * s)))
}

/// Symmetrize, then add growing jitter until Cholesky succeeds.
fn repair<const D: usize>(m: SMatrix<f64, D, D>) -> Option<SMatrix<f64, D, D>> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.cholesky().is_some() {
        return Some(sym);
    }
    let scale = sym.diagonal().amax().max(1e-12);
    let mut jitter = 1e-12 * scale;
    while jitter <= 1e-6 * scale {
        let t = sym + SMatrix::<f64, D, D>::identity() * jitter;
        if t.cholesky().is_some() {
            return Some(t);
        }
        jitter *= 10.0;
    }
    None
}

impl KalmanState {
    pub fn initiate(b: &BBox, cfg: &KalmanConfig) -> Self {
        let z = measurement(b);
        let mut mean = Mean::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let (p, v) = (cfg.std_position * b.h, cfg.std_velocity * b.h);
        let covariance = diag8([2.0 * p, 2.0 * p, 1e-2, 2.0 * p, 10.0 * v, 10.0 * v, 1e-5, 10.0 * v]);
        Self { mean, covariance }
    }

    pub fn bbox(&self) -> BBox {
        let (a, h) = (self.mean[2], self.mean[3]);
        BBox::new(self.mean[0], self.mean[1], a * h, h)
    }

    pub fn is_valid(&self) -> bool {
        self.mean[2] > 0.0 && self.mean[3] > 0.0 && self.covariance.cholesky().is_some()
    }

    pub fn predict(&self, cfg: &KalmanConfig) -> Result<Self> {
        let h = self.mean[3];
        let (p, v) = (cfg.std_position * h, cfg.std_velocity * h);
        let q = diag8([p, p, 1e-2, p, v, v, 1e-5, v]);
        let f = transition();
        let mean = f * self.mean;
        let covariance = repair(f * self.covariance * f.transpose() + q).ok_or(TrackError::NonPositiveDefinite)?;
        Ok(Self { mean, covariance })
    }

    /// Measurement-space mean and innovation covariance.
    pub fn project(&self, cfg: &KalmanConfig) -> (Vector4<f64>, Matrix4<f64>) {
        let h = self.mean[3];
        let p = cfg.std_position * h;
        let r = Matrix4::from_diagonal(&Vector4::new(p * p, p * p, 1e-2, p * p));
        let mean = self.mean.fixed_rows::<4>(0).into_owned();
        let cov = self.covariance.fixed_view::<4, 4>(0, 0).into_owned() + r;
        (mean, cov)
    }

    pub fn update(&self, b: &BBox, cfg: &KalmanConfig) -> Result<Self> {
        let (proj_mean, proj_cov) = self.project(cfg);
        let chol = proj_cov.cholesky().ok_or(TrackError::SingularInnovation)?;
        // K = P Hᵀ S⁻¹ where P Hᵀ is the first four columns of P.
        let pht = self.covariance.fixed_view::<8, 4>(0, 0).into_owned();
        let gain = chol.solve(&pht.transpose()).transpose();
        let innovation = measurement(b) - proj_mean;
        let mean = self.mean + gain * innovation;
        let covariance =
            repair(self.covariance - gain * proj_cov * gain.transpose()).ok_or(TrackError::NonPositiveDefinite)?;
        Ok(Self { mean, covariance })
    }

    /// Applies a 2×3 affine warp of the image plane to position and
    /// velocity.
    pub fn warp(&self, a: &Matrix2x3<f64>) -> Result<Self> {
        let lin = a.fixed_view::<2, 2>(0, 0).into_owned();
        let mut t = Covariance::identity();
        t.fixed_view_mut::<2, 2>(0, 0).copy_from(&lin);
        t.fixed_view_mut::<2, 2>(4, 4).copy_from(&lin);
        let mut mean = t * self.mean;
        mean[0] += a[(0, 2)];
        mean[1] += a[(1, 2)];
        let covariance = repair(t * self.covariance * t.transpose()).ok_or(TrackError::NonPositiveDefinite)?;
        Ok(Self { mean, covariance })
    }

    /// Squared Mahalanobis distance of `b` to the predicted measurement.
    pub fn gate_distance(&self, b: &BBox, cfg: &KalmanConfig) -> Result<f64> {
        let (mean, cov) = self.project(cfg);
        squared_mahalanobis(&mean, &cov, &measurement(b))
    }
}

pub fn squared_mahalanobis(mean: &Vector4<f64>, cov: &Matrix4<f64>, z: &Vector4<f64>) -> Result<f64> {
    let chol = cov.cholesky().ok_or(TrackError::SingularInnovation)?;
    let d = z - mean;
    let w = chol
        .l()
        .solve_lower_triangular(&d)
        .ok_or(TrackError::SingularInnovation)?;
    Ok(w.dot(&w))
}

/// Gate test with inclusive boundary; returns the distance as well.
pub fn mahalanobis_gate(state: &KalmanState, b: &BBox, kappa: f64, cfg: &KalmanConfig) -> Result<(bool, f64)> {
    let d = state.gate_distance(b, cfg)?;
    Ok((d <= kappa, d))
}
