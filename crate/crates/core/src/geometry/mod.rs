//! Camera models, angular parameterizations and rigid-frame transforms.
//!
//! Frame conventions (see `docs/conventions.md`):
//!
//! * camera frame: x forward along the optical axis, y up, z right;
//! * reference (ego / LiDAR) frame: x forward, y left, z up;
//! * pixels: `u` grows to the right, `v` grows downwards, pixel `(i, j)`
//!   covers `[i, i + 1) x [j, j + 1)` and is sampled at `(i + 0.5, j + 0.5)`.
//!
//! [`Extrinsics`] maps camera-frame points into the reference frame and
//! absorbs the axis permutation between the two conventions.

mod camera;
mod extrinsics;
mod fisheye;
mod pinhole;

pub use camera::{CameraModel, Lens, LensKind};
pub use extrinsics::Extrinsics;
pub use fisheye::FisheyeIntrinsics;
pub use pinhole::PinholeIntrinsics;

use nalgebra::Vector3;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Errors raised by projection math and calibration validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// An incident angle (rad) or image radius (px) beyond the lens limit.
    #[error("{value} lies beyond the field-of-view limit {limit}")]
    OutOfFieldOfView { value: f64, limit: f64 },
    #[error("point has non-positive forward depth {depth}")]
    BehindCamera { depth: f64 },
    #[error("cannot project the camera origin")]
    DegeneratePoint,
    #[error("angles (phi={phi}, theta={theta}) outside [-pi, pi] x [-pi/2, pi/2]")]
    AngleOutOfRange { phi: f64, theta: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid extrinsics: {0}")]
    InvalidExtrinsics(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl GeometryError {
    /// True for errors that only mean "this ray or pixel is not observed".
    pub fn is_visibility(&self) -> bool {
        matches!(
            self,
            GeometryError::OutOfFieldOfView { .. }
                | GeometryError::BehindCamera { .. }
                | GeometryError::DegeneratePoint
        )
    }
}

/// Azimuth / elevation pair on the viewing sphere, validated to the
/// canonical ranges `phi in [-pi, pi]`, `theta in [-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalDirection {
    phi: f64,
    theta: f64,
}

impl SphericalDirection {
    pub fn new(phi: f64, theta: f64) -> Result<Self, GeometryError> {
        let ok = phi.is_finite()
            && theta.is_finite()
            && (-PI..=PI).contains(&phi)
            && (-FRAC_PI_2..=FRAC_PI_2).contains(&theta);
        if ok {
            Ok(Self { phi, theta })
        } else {
            Err(GeometryError::AngleOutOfRange { phi, theta })
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        direction_from_angles(self.phi, self.theta)
    }
}

/// Unit viewing ray for azimuth `phi` and elevation `theta` in the camera
/// frame: `[cos(theta) cos(phi), sin(theta), cos(theta) sin(phi)]`.
///
/// The formula is evaluated for any finite input; elevations beyond
/// +-pi/2 wrap over the pole, which equirectangular patches wider than
/// 180 degrees rely on. Use [`SphericalDirection::new`] to enforce the
/// canonical ranges.
#[inline]
pub fn direction_from_angles(phi: f64, theta: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(ct * cp, st, ct * sp)
}

/// Cylindrical direction `[sin(phi), y, cos(phi)]`, expressed in a frame
/// whose third axis is the viewing axis. Not normalized.
#[inline]
pub fn direction_cylindrical(phi: f64, y: f64) -> Vector3<f64> {
    let (sp, cp) = phi.sin_cos();
    Vector3::new(sp, y, cp)
}

/// Cylindrical direction re-expressed in the x-forward camera frame and
/// normalized, so that `(0, 0)` is the optical axis and positive `phi`
/// turns right like the equirectangular azimuth.
#[inline]
pub fn cylindrical_ray(phi: f64, y: f64) -> Vector3<f64> {
    let c = direction_cylindrical(phi, y);
    Vector3::new(c.z, c.y, c.x).normalize()
}

/// Homogeneous multiply by `m`, keeping the first three coordinates.
#[inline]
pub fn transform_point(p: &Vector3<f64>, m: &Extrinsics) -> Vector3<f64> {
    m.transform_point(p)
}
