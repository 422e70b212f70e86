//! Oriented 3D boxes, image-plane footprints and the per-match error terms.

use crate::geometry::{CameraModel, Extrinsics};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Default class vocabulary of the synthetic generator and the evaluator.
pub const DEFAULT_CLASSES: [&str; 6] = ["car", "van", "truck", "bus", "pedestrian", "cyclist"];

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("box size must be positive and finite, got {0:?}")]
    InvalidSize([f64; 3]),
    #[error("box center and yaw must be finite")]
    NonFinite,
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("empty class label")]
    EmptyClass,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Cuboid in the reference frame. `size` is `[length, width, height]`, length
/// along the heading; `yaw` is the heading about +z measured from +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    #[serde(rename = "class")]
    pub class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    class: String,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    track_id: Option<String>,
}

impl TryFrom<RawBox> for Box3D {
    type Error = BoxError;

    fn try_from(r: RawBox) -> Result<Self, BoxError> {
        let mut b = Box3D::new(r.center, r.size, r.yaw, r.class)?;
        if let Some(s) = r.score {
            b = b.with_score(s)?;
        }
        b.track_id = r.track_id;
        Ok(b)
    }
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64, class: impl Into<String>) -> Result<Self, BoxError> {
        if size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(BoxError::InvalidSize(size));
        }
        if center.iter().any(|c| !c.is_finite()) || !yaw.is_finite() {
            return Err(BoxError::NonFinite);
        }
        let class = class.into();
        if class.is_empty() {
            return Err(BoxError::EmptyClass);
        }
        Ok(Self { center, size, yaw: wrap_angle(yaw), class, score: None, track_id: None })
    }

    pub fn with_score(mut self, score: f64) -> Result<Self, BoxError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(BoxError::InvalidScore(score));
        }
        self.score = Some(score);
        Ok(self)
    }

    pub fn with_track_id(mut self, id: impl Into<String>) -> Self {
        self.track_id = Some(id.into());
        self
    }

    pub fn center_vec(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    /// Same box expressed through the rigid transform `m`. The heading picks
    /// up the rotation about z; tilt components are not representable and
    /// are dropped.
    pub fn transformed(&self, m: &Extrinsics) -> Self {
        let c = m.transform_point(&self.center_vec());
        let heading = m.rotate_vector(&Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0));
        Self { center: [c.x, c.y, c.z], yaw: wrap_angle(heading.y.atan2(heading.x)), ..self.clone() }
    }
}

/// The 8 cuboid corners: bottom face first, each face counter-clockwise
/// starting at front-left.
pub fn box_corners(b: &Box3D) -> [Vector3<f64>; 8] {
    let [l, w, h] = b.size.map(|s| s / 2.0);
    let (s, c) = b.yaw.sin_cos();
    let local = [(l, w), (-l, w), (-l, -w), (l, -w)];
    std::array::from_fn(|i| {
        let (x, y) = local[i % 4];
        let z = if i < 4 { -h } else { h };
        Vector3::new(b.center[0] + c * x - s * y, b.center[1] + s * x + c * y, b.center[2] + z)
    })
}

/// Corners plus `per_edge` evenly spaced interior points on each of the 8
/// horizontal edges.
pub fn box_samples(b: &Box3D, per_edge: usize) -> Vec<Vector3<f64>> {
    let corners = box_corners(b);
    let mut out = corners.to_vec();
    for face in [0, 4] {
        for i in 0..4 {
            let (a, e) = (corners[face + i], corners[face + (i + 1) % 4]);
            for k in 1..=per_edge {
                let t = k as f64 / (per_edge + 1) as f64;
                out.push(a + (e - a) * t);
            }
        }
    }
    out
}

/// Axis-aligned pixel rectangle `[u_min, u_max] x [v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox2D {
    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0]
    }

    pub fn iou(&self, other: &BBox2D) -> f64 {
        let iw = (self.u_max.min(other.u_max) - self.u_min.max(other.u_min)).max(0.0);
        let ih = (self.v_max.min(other.v_max) - self.v_min.max(other.v_min)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    fn from_points(pts: impl IntoIterator<Item = [f64; 2]>) -> Option<Self> {
        let mut it = pts.into_iter();
        let [u, v] = it.next()?;
        let mut b = BBox2D { u_min: u, v_min: v, u_max: u, v_max: v };
        for [u, v] in it {
            b.u_min = b.u_min.min(u);
            b.u_max = b.u_max.max(u);
            b.v_min = b.v_min.min(v);
            b.v_max = b.v_max.max(v);
        }
        Some(b)
    }
}

/// Tight image bbox of `b` seen by `cam`, using the corners and one midpoint
/// per horizontal edge. See [`project_box_with`].
pub fn project_box(b: &Box3D, cam: &CameraModel) -> Option<BBox2D> {
    project_box_with(b, cam, 1)
}

/// Projects [`box_samples`]; samples outside the field of view or behind a
/// pinhole are dropped. Returns `None` unless at least one sample lands on
/// the sensor; otherwise the bbox of the surviving samples clipped to the
/// image.
pub fn project_box_with(b: &Box3D, cam: &CameraModel, per_edge: usize) -> Option<BBox2D> {
    let pixels: Vec<[f64; 2]> =
        box_samples(b, per_edge).iter().filter_map(|p| cam.project_reference(p).ok()).collect();
    if !pixels.iter().any(|[u, v]| cam.contains_pixel(*u, *v)) {
        return None;
    }
    let raw = BBox2D::from_points(pixels)?;
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    Some(BBox2D {
        u_min: raw.u_min.clamp(0.0, w),
        u_max: raw.u_max.clamp(0.0, w),
        v_min: raw.v_min.clamp(0.0, h),
        v_max: raw.v_max.clamp(0.0, h),
    })
}

/// Volume IoU of two boxes after aligning their centers and headings.
pub fn aligned_iou(gt: &Box3D, pred: &Box3D) -> f64 {
    let inter: f64 = (0..3).map(|i| gt.size[i].min(pred.size[i])).product();
    inter / (gt.volume() + pred.volume() - inter)
}

/// Ground-plane (x, y) distance between box centers.
pub fn center_distance_2d(gt: &Box3D, pred: &Box3D) -> f64 {
    (gt.center[0] - pred.center[0]).hypot(gt.center[1] - pred.center[1])
}

/// Smallest absolute heading difference, in `[0, pi]`.
pub fn yaw_error(gt: &Box3D, pred: &Box3D) -> f64 {
    angle_difference(gt.yaw, pred.yaw)
}

pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    d.min(TAU - d)
}
