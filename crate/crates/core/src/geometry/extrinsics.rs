use super::GeometryError;
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid camera-to-reference transform stored as a 4x4 homogeneous matrix.
///
/// Serialized as four rows of four numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 4]", into = "[[f64; 4]; 4]")]
pub struct Extrinsics {
    matrix: Matrix4<f64>,
}

impl TryFrom<[[f64; 4]; 4]> for Extrinsics {
    type Error = GeometryError;

    fn try_from(rows: [[f64; 4]; 4]) -> Result<Self, Self::Error> {
        Extrinsics::from_matrix(Matrix4::from_fn(|r, c| rows[r][c]))
    }
}

impl From<Extrinsics> for [[f64; 4]; 4] {
    fn from(e: Extrinsics) -> Self {
        let m = e.matrix;
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }
}

impl Default for Extrinsics {
    fn default() -> Self {
        Self::identity()
    }
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self { matrix: Matrix4::identity() }
    }

    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self, GeometryError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidExtrinsics("non-finite entry".into()));
        }
        let bottom = matrix.fixed_view::<1, 4>(3, 0);
        if (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).abs().max() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidExtrinsics("last row must be [0, 0, 0, 1]".into()));
        }
        let rot: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (rot.transpose() * rot - Matrix3::identity()).abs().max();
        if ortho > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidExtrinsics(format!(
                "rotation block not orthonormal (deviation {ortho:e})"
            )));
        }
        let det = rot.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidExtrinsics(format!("rotation determinant {det} != +1")));
        }
        Ok(Self { matrix })
    }

    pub fn from_rotation_translation(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self { matrix: m }
    }

    /// Camera mounted at `position` (reference frame) looking along heading
    /// `yaw` (counter-clockwise about reference z, 0 = reference x) and tilted
    /// by `pitch` (positive up). Roll is zero.
    pub fn mounted(position: Vector3<f64>, yaw: f64, pitch: f64) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let forward = Vector3::new(cy * cp, sy * cp, sp);
        let up = Vector3::new(-cy * sp, -sy * sp, cp);
        let right = forward.cross(&up);
        let rotation = Matrix3::from_columns(&[forward, up, right]);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&position);
        // Drop signed zeros so serialized calibrations read cleanly.
        m.apply(|v| *v += 0.0);
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Camera origin expressed in the reference frame.
    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// `M . [p; 1]`, first three coordinates.
    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let h = self.matrix * Vector4::new(p.x, p.y, p.z, 1.0);
        Vector3::new(h.x, h.y, h.z)
    }

    #[inline]
    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0) * v
    }

    /// Reference-to-camera transform.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self { matrix: m }
    }

    /// `self . other`: apply `other` first.
    pub fn compose(&self, other: &Extrinsics) -> Self {
        Self { matrix: self.matrix * other.matrix }
    }
}
