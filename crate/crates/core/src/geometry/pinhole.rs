use super::GeometryError;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Ideal perspective intrinsics, no distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPinhole", deny_unknown_fields)]
pub struct PinholeIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPinhole {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl TryFrom<RawPinhole> for PinholeIntrinsics {
    type Error = GeometryError;

    fn try_from(raw: RawPinhole) -> Result<Self, Self::Error> {
        PinholeIntrinsics::new(raw.fx, raw.fy, raw.cx, raw.cy)
    }
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths ({fx}, {fy}) must be positive"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Square-pixel intrinsics with the given horizontal field of view,
    /// centered on an image of `width x height` pixels.
    pub fn from_hfov(hfov: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64)
    }

    pub fn focal(&self) -> (f64, f64) {
        (self.fx, self.fy)
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<[f64; 2], GeometryError> {
        if !(p.x > 0.0) {
            return Err(GeometryError::BehindCamera { depth: p.x });
        }
        Ok([self.cx + self.fx * p.z / p.x, self.cy - self.fy * p.y / p.x])
    }

    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(1.0, -(v - self.cy) / self.fy, (u - self.cx) / self.fx).normalize()
    }
}
