use super::{DataError, SCHEMA_VERSION};
use crate::geometry::{CameraModel, Extrinsics, FisheyeIntrinsics, Lens, LensKind, PinholeIntrinsics};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Camera arrangement tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigLayout {
    /// Four fisheyes: front, rear, left, right.
    #[serde(rename = "surround_4f")]
    Surround4f,
    /// Six pinholes in the usual front / front-side / back-side / back ring.
    #[serde(rename = "surround_6p")]
    Surround6p,
    /// Fisheyes at front and rear only.
    #[serde(rename = "front_rear_2f")]
    FrontRear2f,
    /// Fisheyes at left and right only.
    #[serde(rename = "left_right_2f")]
    LeftRight2f,
    /// Side pinholes without the front and back cameras.
    #[serde(rename = "sides_4p")]
    Sides4p,
    /// Full 4 fisheye + 6 pinhole rig.
    Combined,
    /// Anything else; no count check.
    Custom,
}

impl RigLayout {
    /// `(fisheye count, pinhole count)` the layout requires.
    pub fn expected_counts(self) -> Option<(usize, usize)> {
        match self {
            RigLayout::Surround4f => Some((4, 0)),
            RigLayout::Surround6p => Some((0, 6)),
            RigLayout::FrontRear2f | RigLayout::LeftRight2f => Some((2, 0)),
            RigLayout::Sides4p => Some((0, 4)),
            RigLayout::Combined => Some((4, 6)),
            RigLayout::Custom => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigCalibration {
    pub schema_version: u32,
    pub rig_id: String,
    pub layout: RigLayout,
    pub cameras: Vec<CameraModel>,
}

impl RigCalibration {
    pub fn new(rig_id: impl Into<String>, layout: RigLayout, cameras: Vec<CameraModel>) -> Result<Self, DataError> {
        let rig = Self { schema_version: SCHEMA_VERSION, rig_id: rig_id.into(), layout, cameras };
        rig.validate("")?;
        Ok(rig)
    }

    /// `pointer` prefixes the JSON location used in error messages.
    pub fn validate(&self, pointer: &str) -> Result<(), DataError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DataError::invalid(format!("{pointer}/schema_version"), format!("unsupported schema version {}", self.schema_version)));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|c| c.id() == cam.id()) {
                return Err(DataError::invalid(format!("{pointer}/cameras/{i}/id"), format!("duplicate camera id '{}'", cam.id())));
            }
        }
        if let Some((nf, np)) = self.layout.expected_counts() {
            let (f, p) = (self.of_kind(LensKind::Fisheye).count(), self.of_kind(LensKind::Pinhole).count());
            if (f, p) != (nf, np) {
                return Err(DataError::invalid(
                    format!("{pointer}/layout"),
                    format!("layout {:?} needs {nf} fisheye + {np} pinhole cameras, rig has {f} + {p}", self.layout),
                ));
            }
        }
        Ok(())
    }

    pub fn camera(&self, id: &str) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.id() == id)
    }

    pub fn of_kind(&self, kind: LensKind) -> impl Iterator<Item = &CameraModel> {
        self.cameras.iter().filter(move |c| c.kind() == kind)
    }

    /// Sub-rig holding only the named cameras, in the given order.
    pub fn subset(&self, ids: &[&str], layout: RigLayout) -> Result<Self, DataError> {
        let cams = ids
            .iter()
            .map(|id| self.camera(id).cloned().ok_or_else(|| DataError::invalid("/cameras", format!("unknown camera '{id}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(format!("{}-{}", self.rig_id, layout_name(layout)), layout, cams)
    }
}

fn layout_name(layout: RigLayout) -> String {
    serde_json::to_value(layout).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub const FISHEYE_IDS: [&str; 4] = ["FISHEYE_FRONT", "FISHEYE_REAR", "FISHEYE_LEFT", "FISHEYE_RIGHT"];
pub const PINHOLE_IDS: [&str; 6] = ["CAM_FRONT", "CAM_FRONT_LEFT", "CAM_FRONT_RIGHT", "CAM_BACK", "CAM_BACK_LEFT", "CAM_BACK_RIGHT"];

/// Fisheye defaults: 800x800, 220 deg, image circle touching the frame edge
/// at 110 deg, mild negative cubic term.
pub fn default_fisheye_intrinsics(scale: f64) -> Result<FisheyeIntrinsics, DataError> {
    let half = 400.0 * scale;
    Ok(FisheyeIntrinsics::with_image_circle([-2.0 * scale, 0.3 * scale, 0.0, 0.0], half, half, half, 220f64.to_radians())?)
}

fn scaled(v: f64, scale: f64) -> u32 {
    ((v * scale).round() as u32).max(1)
}

/// Rig used by the synthetic generator. `scale` multiplies every image
/// dimension (1.0 = 800x800 fisheye, 1280x720 pinhole).
pub fn default_rig(layout: RigLayout, scale: f64) -> Result<RigCalibration, DataError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DataError::invalid("/scale", format!("resolution scale {scale}")));
    }
    let fs = scaled(800.0, scale);
    let fk = default_fisheye_intrinsics(fs as f64 / 800.0)?;
    let fisheye = |id: &str, pos: [f64; 3], yaw: f64| {
        CameraModel::new(id, Lens::Fisheye(fk.clone()), Extrinsics::mounted(Vector3::from(pos), yaw, 0.0), [fs, fs])
    };
    let (pw, ph) = (scaled(1280.0, scale), scaled(720.0, scale));
    let pk = PinholeIntrinsics::from_hfov(70f64.to_radians(), pw, ph)?;
    let pinhole = |id: &str, pos: [f64; 3], yaw_deg: f64| {
        CameraModel::new(id, Lens::Pinhole(pk.clone()), Extrinsics::mounted(Vector3::from(pos), yaw_deg.to_radians(), 0.0), [pw, ph])
    };
    let fisheyes = [
        fisheye(FISHEYE_IDS[0], [2.0, 0.0, 0.8], 0.0)?,
        fisheye(FISHEYE_IDS[1], [-2.0, 0.0, 0.8], PI)?,
        fisheye(FISHEYE_IDS[2], [0.5, 1.0, 1.0], FRAC_PI_2)?,
        fisheye(FISHEYE_IDS[3], [0.5, -1.0, 1.0], -FRAC_PI_2)?,
    ];
    let pinholes = [
        pinhole(PINHOLE_IDS[0], [1.5, 0.0, 1.6], 0.0)?,
        pinhole(PINHOLE_IDS[1], [1.3, 0.5, 1.6], 55.0)?,
        pinhole(PINHOLE_IDS[2], [1.3, -0.5, 1.6], -55.0)?,
        pinhole(PINHOLE_IDS[3], [-1.0, 0.0, 1.6], 180.0)?,
        pinhole(PINHOLE_IDS[4], [-0.8, 0.5, 1.6], 110.0)?,
        pinhole(PINHOLE_IDS[5], [-0.8, -0.5, 1.6], -110.0)?,
    ];
    let cameras: Vec<CameraModel> = match layout {
        RigLayout::Surround4f => fisheyes.to_vec(),
        RigLayout::Surround6p => pinholes.to_vec(),
        RigLayout::FrontRear2f => fisheyes[..2].to_vec(),
        RigLayout::LeftRight2f => fisheyes[2..].to_vec(),
        RigLayout::Sides4p => vec![pinholes[1].clone(), pinholes[2].clone(), pinholes[4].clone(), pinholes[5].clone()],
        RigLayout::Combined | RigLayout::Custom => fisheyes.iter().chain(&pinholes).cloned().collect(),
    };
    RigCalibration::new(format!("default-{}", layout_name(layout)), layout, cameras)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rigs_validate() {
        for layout in [
            RigLayout::Surround4f,
            RigLayout::Surround6p,
            RigLayout::FrontRear2f,
            RigLayout::LeftRight2f,
            RigLayout::Sides4p,
            RigLayout::Combined,
        ] {
            let rig = default_rig(layout, 1.0).unwrap();
            let (f, p) = layout.expected_counts().unwrap();
            assert_eq!(rig.cameras.len(), f + p);
        }
    }

    #[test]
    fn fisheye_circle_fills_frame() {
        let k = default_fisheye_intrinsics(1.0).unwrap();
        assert!((k.radius(110f64.to_radians()).unwrap() - 400.0).abs() < 1e-9);
        let k = k.coefficients();
        assert!(k[1].abs() < 0.02 * k[0] && k[2].abs() < 0.01 * k[0]);
    }

    #[test]
    fn layout_mismatch_and_duplicates_rejected() {
        let rig = default_rig(RigLayout::Combined, 0.25).unwrap();
        assert!(RigCalibration::new("x", RigLayout::Surround4f, rig.cameras.clone()).is_err());
        let dup = vec![rig.cameras[0].clone(), rig.cameras[0].clone()];
        assert!(RigCalibration::new("x", RigLayout::Custom, dup).is_err());
        let sub = rig.subset(&["FISHEYE_FRONT", "FISHEYE_REAR"], RigLayout::FrontRear2f).unwrap();
        assert_eq!(sub.cameras.len(), 2);
    }

    #[test]
    fn scaled_rig_sizes() {
        let rig = default_rig(RigLayout::Combined, 0.25).unwrap();
        assert_eq!(rig.camera("FISHEYE_FRONT").unwrap().image_size(), [200, 200]);
        assert_eq!(rig.camera("CAM_FRONT").unwrap().image_size(), [320, 180]);
    }

    #[test]
    fn json_round_trip() {
        let rig = default_rig(RigLayout::Combined, 1.0).unwrap();
        let s = serde_json::to_string_pretty(&rig).unwrap();
        let back: RigCalibration = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rig);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), s);
    }
}
