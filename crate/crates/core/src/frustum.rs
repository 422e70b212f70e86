//! Spherical depth shells, the depth-distribution lift and BEV sum pooling.

use crate::geometry::Extrinsics;
use crate::warp::FeatureMap;
use image::GrayImage;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrustumError {
    #[error("invalid depth binning: {0}")]
    InvalidBinning(String),
    #[error("invalid BEV grid: {0}")]
    InvalidBev(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("ray {index} has norm {norm}, expected a unit vector")]
    NotUnitRay { index: usize, norm: f64 },
    #[error("frustum points must be in the reference frame")]
    WrongFrame,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSpacing {
    /// `r_d = r_min + d (r_max - r_min) / D`, `d = 0..D-1`.
    Uniform,
    /// `r_d = r_min + (r_max - r_min) d (d + 1) / (D (D + 1))`, `d = 1..D`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBinning {
    pub r_min: f64,
    pub r_max: f64,
    pub bins: usize,
    pub spacing: DepthSpacing,
}

impl Default for DepthBinning {
    /// 1 m to 68 m in 67 uniform shells, enough to reach the corners of a
    /// +-48 m square detection range.
    fn default() -> Self {
        Self { r_min: 1.0, r_max: 68.0, bins: 67, spacing: DepthSpacing::Uniform }
    }
}

impl DepthBinning {
    pub fn new(r_min: f64, r_max: f64, bins: usize, spacing: DepthSpacing) -> Result<Self, FrustumError> {
        let b = Self { r_min, r_max, bins, spacing };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), FrustumError> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(FrustumError::InvalidBinning(format!(
                "need 0 < r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if self.bins == 0 {
            return Err(FrustumError::InvalidBinning("at least one bin required".into()));
        }
        Ok(())
    }

    /// Shell radii in meters, strictly increasing.
    pub fn levels(&self) -> Vec<f64> {
        let (lo, hi, n) = (self.r_min, self.r_max, self.bins as f64);
        match self.spacing {
            DepthSpacing::Uniform => {
                let delta = (hi - lo) / n;
                (0..self.bins).map(|d| lo + d as f64 * delta).collect()
            }
            DepthSpacing::Quadratic => {
                let scale = (hi - lo) / (n * (n + 1.0));
                (1..=self.bins).map(|d| lo + scale * (d * (d + 1)) as f64).collect()
            }
        }
    }
}

/// Shell radii for `binning`.
pub fn depth_levels(binning: &DepthBinning) -> Vec<f64> {
    binning.levels()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    Reference,
}

/// `depth x height x width` anchor points, `points[(d * H + h) * W + w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrustumShellSet {
    depth: usize,
    height: usize,
    width: usize,
    points: Vec<Vector3<f64>>,
    frame: Frame,
    camera_id: String,
}

impl FrustumShellSet {
    pub fn from_points(
        depth: usize,
        height: usize,
        width: usize,
        points: Vec<Vector3<f64>>,
        frame: Frame,
        camera_id: impl Into<String>,
    ) -> Result<Self, FrustumError> {
        if points.len() != depth * height * width {
            return Err(FrustumError::DimensionMismatch {
                expected: format!("{depth}x{height}x{width} points"),
                actual: format!("{} points", points.len()),
            });
        }
        Ok(Self { depth, height, width, points, frame, camera_id: camera_id.into() })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn point(&self, d: usize, h: usize, w: usize) -> &Vector3<f64> {
        &self.points[(d * self.height + h) * self.width + w]
    }
}

/// Places `r_d * ray` for every shell and ray, then moves the points into
/// the reference frame with `camera_to_reference`. `rays` is row-major
/// `height x width` and must hold unit vectors.
pub fn build_frustum(
    rays: &[Vector3<f64>],
    height: usize,
    width: usize,
    binning: &DepthBinning,
    camera_to_reference: &Extrinsics,
    camera_id: &str,
) -> Result<FrustumShellSet, FrustumError> {
    binning.validate()?;
    if rays.len() != height * width {
        return Err(FrustumError::DimensionMismatch {
            expected: format!("{height}x{width} rays"),
            actual: format!("{} rays", rays.len()),
        });
    }
    if let Some((index, norm)) =
        rays.iter().map(|r| r.norm()).enumerate().find(|(_, n)| (n - 1.0).abs() > 1e-9)
    {
        return Err(FrustumError::NotUnitRay { index, norm });
    }
    let radii = binning.levels();
    let mut points = Vec::with_capacity(radii.len() * rays.len());
    for r in &radii {
        points.extend(rays.iter().map(|ray| camera_to_reference.transform_point(&(*r * ray))));
    }
    FrustumShellSet::from_points(radii.len(), height, width, points, Frame::Reference, camera_id)
}

/// Per-shell features `alpha_d * c` with the depth distribution `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedVolume {
    depth: usize,
    height: usize,
    width: usize,
    channels: usize,
    alpha: Vec<f64>,
    values: Vec<f64>,
}

impl LiftedVolume {
    /// `alpha` is `D x H x W`, `values` is `D x H x W x C`. Validates the
    /// sizes only; `alpha` is not re-normalized.
    pub fn from_parts(
        depth: usize,
        height: usize,
        width: usize,
        channels: usize,
        alpha: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, FrustumError> {
        let cells = depth * height * width;
        if alpha.len() != cells || values.len() != cells * channels {
            return Err(FrustumError::DimensionMismatch {
                expected: format!("{cells} weights and {} values", cells * channels),
                actual: format!("{} weights and {} values", alpha.len(), values.len()),
            });
        }
        Ok(Self { depth, height, width, channels, alpha, values })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.depth, self.height, self.width, self.channels)
    }

    pub fn alpha(&self, d: usize, h: usize, w: usize) -> f64 {
        self.alpha[(d * self.height + h) * self.width + w]
    }

    pub fn feature(&self, d: usize, h: usize, w: usize) -> &[f64] {
        let i = ((d * self.height + h) * self.width + w) * self.channels;
        &self.values[i..i + self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sum of every lifted value.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Softmax over the `D` logit channels at every pixel, then
/// `out[d, h, w, :] = alpha[d, h, w] * features[h, w, :]`.
pub fn lift(features: &FeatureMap, depth_logits: &FeatureMap) -> Result<LiftedVolume, FrustumError> {
    let (h, w) = (features.height(), features.width());
    if (depth_logits.height(), depth_logits.width()) != (h, w) {
        return Err(FrustumError::DimensionMismatch {
            expected: format!("{h}x{w} depth logits"),
            actual: format!("{}x{}", depth_logits.height(), depth_logits.width()),
        });
    }
    let (depth, channels) = (depth_logits.channels(), features.channels());
    if depth == 0 {
        return Err(FrustumError::DimensionMismatch { expected: "at least one depth channel".into(), actual: "0".into() });
    }
    let mut alpha = vec![0.0; depth * h * w];
    let mut values = vec![0.0; depth * h * w * channels];
    let mut weights = vec![0.0; depth];
    for row in 0..h {
        for col in 0..w {
            let logits = depth_logits.pixel(row, col);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (wgt, l) in weights.iter_mut().zip(logits) {
                *wgt = (l - max).exp();
                total += *wgt;
            }
            let c = features.pixel(row, col);
            for (d, wgt) in weights.iter().enumerate() {
                let a = wgt / total;
                let cell = (d * h + row) * w + col;
                alpha[cell] = a;
                for (out, v) in values[cell * channels..(cell + 1) * channels].iter_mut().zip(c) {
                    *out = a * v;
                }
            }
        }
    }
    Ok(LiftedVolume { depth, height: h, width: w, channels, alpha, values })
}

/// Metric BEV raster over `[x_min, x_max) x [y_min, y_max)` with a height
/// gate `[z_min, z_max]`, all in the reference frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub cell_size: f64,
}

impl Default for BevSpec {
    fn default() -> Self {
        Self { x_min: -48.0, x_max: 48.0, y_min: -48.0, y_max: 48.0, z_min: -5.0, z_max: 5.0, cell_size: 0.8 }
    }
}

impl BevSpec {
    /// Square grid of half-width `half_extent`, default height gate.
    pub fn square(half_extent: f64, cell_size: f64) -> Result<Self, FrustumError> {
        let spec = Self { x_min: -half_extent, x_max: half_extent, y_min: -half_extent, y_max: half_extent, cell_size, ..Self::default() };
        spec.dims()?;
        Ok(spec)
    }

    /// `(nx, ny)` cell counts; the extent must split into whole cells.
    pub fn dims(&self) -> Result<(usize, usize), FrustumError> {
        if !(self.cell_size > 0.0) || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) || !(self.z_max >= self.z_min) {
            return Err(FrustumError::InvalidBev(format!("{self:?}")));
        }
        let count = |span: f64| -> Result<usize, FrustumError> {
            let n = span / self.cell_size;
            let rounded = n.round();
            if rounded < 1.0 || (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
                return Err(FrustumError::InvalidBev(format!(
                    "extent {span} m is not a whole number of {} m cells",
                    self.cell_size
                )));
            }
            Ok(rounded as usize)
        };
        Ok((count(self.x_max - self.x_min)?, count(self.y_max - self.y_min)?))
    }

    /// `(ix, iy)` of the cell containing `p`, `None` outside the extent or
    /// the height gate.
    pub fn cell_of(&self, p: &Vector3<f64>, nx: usize, ny: usize) -> Option<(usize, usize)> {
        if !(p.z >= self.z_min && p.z <= self.z_max) {
            return None;
        }
        let fx = ((p.x - self.x_min) / self.cell_size).floor();
        let fy = ((p.y - self.y_min) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= nx as f64 || fy >= ny as f64 || p.x >= self.x_max || p.y >= self.y_max {
            return None;
        }
        Some((fx as usize, fy as usize))
    }
}

/// Accumulated BEV features, `data[(iy * nx + ix) * C + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    spec: BevSpec,
    nx: usize,
    ny: usize,
    channels: usize,
    data: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(spec: BevSpec, channels: usize) -> Result<Self, FrustumError> {
        let (nx, ny) = spec.dims()?;
        Ok(Self { spec, nx, ny, channels, data: vec![0.0; nx * ny * channels] })
    }

    pub fn spec(&self) -> &BevSpec {
        &self.spec
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.channels)
    }

    pub fn get(&self, ix: usize, iy: usize, c: usize) -> f64 {
        self.data[(iy * self.nx + ix) * self.channels + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// CSV with header `ix,iy,channel,value`, one line per cell and channel.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FrustumError> {
        writeln!(w, "ix,iy,channel,value")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                for c in 0..self.channels {
                    writeln!(w, "{ix},{iy},{c},{}", self.get(ix, iy, c))?;
                }
            }
        }
        Ok(())
    }

    /// Channel-summed magnitude scaled to 0..255. Forward (+x) is up and
    /// left (+y) is left: image row `nx - 1 - ix`, column `ny - 1 - iy`.
    pub fn heatmap(&self) -> GrayImage {
        let sums: Vec<f64> = self.data.chunks(self.channels.max(1)).map(|c| c.iter().sum::<f64>().abs()).collect();
        let max = sums.iter().cloned().fold(0.0, f64::max);
        let mut img = GrayImage::new(self.ny as u32, self.nx as u32);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let v = if max > 0.0 { (sums[iy * self.nx + ix] / max * 255.0).round_ties_even() as u8 } else { 0 };
                img.put_pixel((self.ny - 1 - iy) as u32, (self.nx - 1 - ix) as u32, image::Luma([v]));
            }
        }
        img
    }
}

/// Sum-pools every lifted feature into the BEV cell containing its anchor.
pub fn splat(volume: &LiftedVolume, frustum: &FrustumShellSet, spec: &BevSpec) -> Result<BevGrid, FrustumError> {
    let mut bev = BevGrid::zeros(spec.clone(), volume.channels)?;
    splat_into(&mut bev, volume, frustum)?;
    Ok(bev)
}

/// [`splat`] accumulating into an existing grid (e.g. one per camera rig).
pub fn splat_into(bev: &mut BevGrid, volume: &LiftedVolume, frustum: &FrustumShellSet) -> Result<(), FrustumError> {
    check_pair(volume, frustum)?;
    if volume.channels != bev.channels {
        return Err(FrustumError::DimensionMismatch {
            expected: format!("{} channels", bev.channels),
            actual: format!("{}", volume.channels),
        });
    }
    let channels = volume.channels;
    for (i, p) in frustum.points.iter().enumerate() {
        if let Some((ix, iy)) = bev.spec.cell_of(p, bev.nx, bev.ny) {
            let dst = (iy * bev.nx + ix) * channels;
            for c in 0..channels {
                bev.data[dst + c] += volume.values[i * channels + c];
            }
        }
    }
    Ok(())
}

/// Mass of the lifted features whose anchors fall inside the BEV extent.
pub fn in_extent_mass(volume: &LiftedVolume, frustum: &FrustumShellSet, spec: &BevSpec) -> Result<f64, FrustumError> {
    check_pair(volume, frustum)?;
    let (nx, ny) = spec.dims()?;
    let c = volume.channels;
    Ok(frustum
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| spec.cell_of(p, nx, ny).is_some())
        .map(|(i, _)| volume.values[i * c..(i + 1) * c].iter().sum::<f64>())
        .sum())
}

fn check_pair(volume: &LiftedVolume, frustum: &FrustumShellSet) -> Result<(), FrustumError> {
    if frustum.frame != Frame::Reference {
        return Err(FrustumError::WrongFrame);
    }
    if frustum.dims() != (volume.depth, volume.height, volume.width) {
        return Err(FrustumError::DimensionMismatch {
            expected: format!("{:?} frustum", (volume.depth, volume.height, volume.width)),
            actual: format!("{:?}", frustum.dims()),
        });
    }
    Ok(())
}
