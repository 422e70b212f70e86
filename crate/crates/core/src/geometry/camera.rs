use super::{Extrinsics, FisheyeIntrinsics, GeometryError, PinholeIntrinsics};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Lens {
    Pinhole(PinholeIntrinsics),
    Fisheye(FisheyeIntrinsics),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensKind {
    Pinhole,
    Fisheye,
}

impl Lens {
    pub fn kind(&self) -> LensKind {
        match self {
            Lens::Pinhole(_) => LensKind::Pinhole,
            Lens::Fisheye(_) => LensKind::Fisheye,
        }
    }

    pub fn principal_point(&self) -> (f64, f64) {
        match self {
            Lens::Pinhole(k) => k.principal_point(),
            Lens::Fisheye(k) => k.principal_point(),
        }
    }
}

/// One calibrated camera: intrinsics, camera-to-reference extrinsics and
/// image size `[width, height]` in pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCamera")]
pub struct CameraModel {
    id: String,
    lens: Lens,
    extrinsics: Extrinsics,
    image_size: [u32; 2],
    #[serde(skip_serializing)]
    reference_to_camera: Extrinsics,
}

impl PartialEq for CameraModel {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.lens == other.lens
            && self.extrinsics == other.extrinsics
            && self.image_size == other.image_size
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    id: String,
    lens: Lens,
    extrinsics: Extrinsics,
    image_size: [u32; 2],
}

impl TryFrom<RawCamera> for CameraModel {
    type Error = GeometryError;

    fn try_from(raw: RawCamera) -> Result<Self, Self::Error> {
        CameraModel::new(raw.id, raw.lens, raw.extrinsics, raw.image_size)
    }
}

impl CameraModel {
    pub fn new(
        id: impl Into<String>,
        lens: Lens,
        extrinsics: Extrinsics,
        image_size: [u32; 2],
    ) -> Result<Self, GeometryError> {
        let id = id.into();
        let [w, h] = image_size;
        if w == 0 || h == 0 {
            return Err(GeometryError::InvalidCamera(format!("{id}: empty image size {w}x{h}")));
        }
        let (cx, cy) = lens.principal_point();
        if !((0.0..=w as f64).contains(&cx) && (0.0..=h as f64).contains(&cy)) {
            return Err(GeometryError::InvalidCamera(format!(
                "{id}: principal point ({cx}, {cy}) outside the {w}x{h} image"
            )));
        }
        let reference_to_camera = extrinsics.inverse();
        Ok(Self { id, lens, extrinsics, image_size, reference_to_camera })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lens(&self) -> &Lens {
        &self.lens
    }

    pub fn kind(&self) -> LensKind {
        self.lens.kind()
    }

    pub fn extrinsics(&self) -> &Extrinsics {
        &self.extrinsics
    }

    pub fn width(&self) -> u32 {
        self.image_size[0]
    }

    pub fn height(&self) -> u32 {
        self.image_size[1]
    }

    pub fn image_size(&self) -> [u32; 2] {
        self.image_size
    }

    /// Camera center in the reference frame.
    pub fn origin(&self) -> Vector3<f64> {
        self.extrinsics.translation()
    }

    /// Same camera with a different full field of view (fisheye only).
    pub fn with_fov(&self, fov: f64) -> Result<Self, GeometryError> {
        let lens = match &self.lens {
            Lens::Fisheye(k) => {
                let (cx, cy) = k.principal_point();
                Lens::Fisheye(FisheyeIntrinsics::new(k.coefficients(), cx, cy, fov)?)
            }
            Lens::Pinhole(_) => {
                return Err(GeometryError::InvalidCamera("pinhole lenses have no fov parameter".into()))
            }
        };
        Self::new(self.id.clone(), lens, self.extrinsics.clone(), self.image_size)
    }

    /// Projects a camera-frame point. The result may lie outside the image.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Result<[f64; 2], GeometryError> {
        match &self.lens {
            Lens::Pinhole(k) => k.project(p_cam),
            Lens::Fisheye(k) => k.project(p_cam),
        }
    }

    /// Unit camera-frame ray through pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64) -> Result<Vector3<f64>, GeometryError> {
        match &self.lens {
            Lens::Pinhole(k) => Ok(k.unproject(u, v)),
            Lens::Fisheye(k) => k.unproject(u, v),
        }
    }

    pub fn to_camera(&self, p_ref: &Vector3<f64>) -> Vector3<f64> {
        self.reference_to_camera.transform_point(p_ref)
    }

    pub fn to_reference(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.transform_point(p_cam)
    }

    pub fn project_reference(&self, p_ref: &Vector3<f64>) -> Result<[f64; 2], GeometryError> {
        self.project(&self.to_camera(p_ref))
    }

    /// True when the continuous pixel coordinate lies on the sensor.
    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width() as f64).contains(&u) && (0.0..=self.height() as f64).contains(&v)
    }
}
