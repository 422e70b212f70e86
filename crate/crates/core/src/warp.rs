//! Sampling grids from equirectangular, cylindrical or perspective target
//! views into fisheye source images, and grid sampling of feature maps.
//!
//! Normalized source coordinates follow the half-pixel-aligned convention:
//! the center of source pixel index `i` maps to `2 (i + 0.5) / size - 1`, so
//! `-1` and `+1` are the outer edges of the first and last pixel.

use crate::geometry::{cylindrical_ray, direction_from_angles, CameraModel, GeometryError, PinholeIntrinsics};
use image::RgbImage;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("feature map contains non-finite values")]
    NonFinite,
    #[error("malformed grid dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Target projection of a sampling grid. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// Columns linear in azimuth, rows linear in elevation (top row = `theta_max`).
    Equirectangular { phi_min: f64, phi_max: f64, theta_min: f64, theta_max: f64 },
    /// Columns linear in azimuth, rows linear in `y = tan(elevation)`.
    Cylindrical { phi_min: f64, phi_max: f64, theta_min: f64, theta_max: f64 },
    /// Virtual pinhole looking down the optical axis.
    Perspective { fx: f64, fy: f64, cx: f64, cy: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub target: TargetKind,
    pub height: usize,
    pub width: usize,
}

impl GridSpec {
    pub fn new(target: TargetKind, height: usize, width: usize) -> Result<Self, WarpError> {
        let spec = Self { target, height, width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn equirectangular(
        height: usize,
        width: usize,
        (phi_min, phi_max): (f64, f64),
        (theta_min, theta_max): (f64, f64),
    ) -> Result<Self, WarpError> {
        Self::new(TargetKind::Equirectangular { phi_min, phi_max, theta_min, theta_max }, height, width)
    }

    pub fn cylindrical(
        height: usize,
        width: usize,
        (phi_min, phi_max): (f64, f64),
        (theta_min, theta_max): (f64, f64),
    ) -> Result<Self, WarpError> {
        Self::new(TargetKind::Cylindrical { phi_min, phi_max, theta_min, theta_max }, height, width)
    }

    /// Centered virtual pinhole with square pixels and horizontal FoV `hfov`.
    pub fn perspective(height: usize, width: usize, hfov: f64) -> Result<Self, WarpError> {
        if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
            return Err(WarpError::InvalidSpec(format!("perspective hfov {hfov} outside (0, pi)")));
        }
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(
            TargetKind::Perspective { fx: f, fy: f, cx: 0.5 * width as f64, cy: 0.5 * height as f64 },
            height,
            width,
        )
    }

    /// Equirectangular patch spanning `[-fov/2, fov/2]` in both angles.
    pub fn default_equirectangular(fov: f64, height: usize, width: usize) -> Result<Self, WarpError> {
        let h = 0.5 * fov;
        Self::equirectangular(height, width, (-h, h), (-h, h))
    }

    fn validate(&self) -> Result<(), WarpError> {
        if self.height == 0 || self.width == 0 {
            return Err(WarpError::InvalidSpec(format!("empty grid {}x{}", self.height, self.width)));
        }
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match self.target {
            TargetKind::Equirectangular { phi_min, phi_max, theta_min, theta_max } => {
                if !finite(&[phi_min, phi_max, theta_min, theta_max]) || phi_max <= phi_min || theta_max <= theta_min {
                    return Err(WarpError::InvalidSpec("angular bounds must be finite and increasing".into()));
                }
            }
            TargetKind::Cylindrical { phi_min, phi_max, theta_min, theta_max } => {
                let half_pi = std::f64::consts::FRAC_PI_2;
                if !finite(&[phi_min, phi_max, theta_min, theta_max]) || phi_max <= phi_min || theta_max <= theta_min {
                    return Err(WarpError::InvalidSpec("angular bounds must be finite and increasing".into()));
                }
                if theta_min <= -half_pi || theta_max >= half_pi {
                    return Err(WarpError::InvalidSpec("cylindrical elevation must stay inside (-pi/2, pi/2)".into()));
                }
            }
            TargetKind::Perspective { fx, fy, cx, cy } => {
                PinholeIntrinsics::new(fx, fy, cx, cy)?;
            }
        }
        Ok(())
    }

    /// Azimuth of column `col` (cell centers).
    pub fn column_phi(&self, col: usize) -> Option<f64> {
        match self.target {
            TargetKind::Equirectangular { phi_min, phi_max, .. } | TargetKind::Cylindrical { phi_min, phi_max, .. } => {
                Some(phi_min + (col as f64 + 0.5) / self.width as f64 * (phi_max - phi_min))
            }
            TargetKind::Perspective { .. } => None,
        }
    }

    /// Elevation of row `row` for equirectangular grids (row 0 is the top).
    pub fn row_theta(&self, row: usize) -> Option<f64> {
        match self.target {
            TargetKind::Equirectangular { theta_min, theta_max, .. } => {
                Some(theta_max - (row as f64 + 0.5) / self.height as f64 * (theta_max - theta_min))
            }
            _ => None,
        }
    }

    /// Unit camera-frame ray of target cell `(row, col)`.
    pub fn ray(&self, row: usize, col: usize) -> Vector3<f64> {
        match self.target {
            TargetKind::Equirectangular { .. } => {
                direction_from_angles(self.column_phi(col).unwrap(), self.row_theta(row).unwrap())
            }
            TargetKind::Cylindrical { theta_min, theta_max, .. } => {
                let (y_top, y_bottom) = (theta_max.tan(), theta_min.tan());
                let y = y_top - (row as f64 + 0.5) / self.height as f64 * (y_top - y_bottom);
                cylindrical_ray(self.column_phi(col).unwrap(), y)
            }
            TargetKind::Perspective { fx, fy, cx, cy } => {
                let u = col as f64 + 0.5;
                let v = row as f64 + 0.5;
                Vector3::new(1.0, -(v - cy) / fy, (u - cx) / fx).normalize()
            }
        }
    }

    /// All target rays, row-major.
    pub fn rays(&self) -> Vec<Vector3<f64>> {
        (0..self.height).flat_map(|r| (0..self.width).map(move |c| self.ray(r, c))).collect()
    }
}

/// Map from a continuous pixel coordinate to `[-1, 1]`. Equivalent to
/// `2 (i + 0.5) / size - 1` on the pixel-index coordinate `i = u - 0.5`.
#[inline]
pub fn normalize_coordinate(u: f64, size: f64) -> f64 {
    2.0 * u / size - 1.0
}

/// Inverse of [`normalize_coordinate`].
#[inline]
pub fn denormalize_coordinate(x: f64, size: f64) -> f64 {
    0.5 * (x + 1.0) * size
}

/// Dense target-to-source lookup with a validity mask. Invalid cells hold
/// NaN coordinates and are never sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    height: usize,
    width: usize,
    coords: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl SamplingGrid {
    /// Builds a grid from explicit normalized coordinates; `None` marks an
    /// invalid cell. Valid entries must lie in `[-1, 1]^2`.
    pub fn from_cells(height: usize, width: usize, cells: Vec<Option<[f64; 2]>>) -> Result<Self, WarpError> {
        if cells.len() != height * width {
            return Err(WarpError::DimensionMismatch {
                expected: format!("{} cells", height * width),
                actual: format!("{} cells", cells.len()),
            });
        }
        let mut coords = Vec::with_capacity(cells.len());
        let mut valid = Vec::with_capacity(cells.len());
        for cell in cells {
            match cell {
                Some([x, y]) if (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y) => {
                    coords.push([x, y]);
                    valid.push(true);
                }
                Some(c) => return Err(WarpError::InvalidSpec(format!("cell {c:?} outside [-1, 1]^2"))),
                None => {
                    coords.push([f64::NAN, f64::NAN]);
                    valid.push(false);
                }
            }
        }
        Ok(Self { height, width, coords, valid })
    }

    /// Grid mapping every cell of a `height x width` map onto itself.
    pub fn identity(height: usize, width: usize) -> Self {
        let cells = (0..height)
            .flat_map(|r| {
                (0..width).map(move |c| {
                    Some([
                        normalize_coordinate(c as f64 + 0.5, width as f64),
                        normalize_coordinate(r as f64 + 0.5, height as f64),
                    ])
                })
            })
            .collect();
        Self::from_cells(height, width, cells).expect("identity cells are in range")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Normalized source coordinate of a cell, `None` when invalid.
    pub fn get(&self, row: usize, col: usize) -> Option<[f64; 2]> {
        let i = row * self.width + col;
        self.valid[i].then(|| self.coords[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    /// Little-endian dump: magic `FSGRID01`, `u32` height and width, one
    /// `(x, y)` pair of `f32` per cell row-major (NaN for invalid cells),
    /// then a validity bitmap of `ceil(h * w / 8)` bytes, LSB first.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), WarpError> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        for c in &self.coords {
            w.write_all(&(c[0] as f32).to_le_bytes())?;
            w.write_all(&(c[1] as f32).to_le_bytes())?;
        }
        let mut bitmap = vec![0u8; self.valid.len().div_ceil(8)];
        for (i, _) in self.valid.iter().enumerate().filter(|(_, v)| **v) {
            bitmap[i / 8] |= 1 << (i % 8);
        }
        w.write_all(&bitmap)?;
        Ok(())
    }

    /// Reads a dump written by [`write_dump`](Self::write_dump). Coordinates
    /// come back at `f32` precision.
    pub fn read_dump<R: Read>(mut r: R) -> Result<Self, WarpError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(WarpError::BadDump("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let height = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        let n = height * width;
        let mut raw = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut word)?;
            let x = f32::from_le_bytes(word) as f64;
            r.read_exact(&mut word)?;
            let y = f32::from_le_bytes(word) as f64;
            raw.push([x, y]);
        }
        let mut bitmap = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut bitmap)?;
        let cells = raw
            .into_iter()
            .enumerate()
            .map(|(i, c)| (bitmap[i / 8] >> (i % 8) & 1 == 1).then_some(c))
            .collect();
        Self::from_cells(height, width, cells).map_err(|e| WarpError::BadDump(e.to_string()))
    }
}

const DUMP_MAGIC: &[u8; 8] = b"FSGRID01";

/// Projects every target ray of `spec` through `cam` and normalizes the
/// pixel position. Rays outside the lens field of view, behind a pinhole or
/// landing off the sensor give invalid cells.
pub fn build_grid(spec: &GridSpec, cam: &CameraModel) -> SamplingGrid {
    let (w_src, h_src) = (cam.width() as f64, cam.height() as f64);
    let mut coords = vec![[f64::NAN; 2]; spec.height * spec.width];
    let mut valid = vec![false; spec.height * spec.width];
    coords
        .par_chunks_mut(spec.width)
        .zip(valid.par_chunks_mut(spec.width))
        .enumerate()
        .for_each(|(row, (coord_row, valid_row))| {
            for col in 0..spec.width {
                let ray = spec.ray(row, col);
                if let Ok([u, v]) = cam.project(&ray) {
                    if cam.contains_pixel(u, v) {
                        coord_row[col] = [normalize_coordinate(u, w_src), normalize_coordinate(v, h_src)];
                        valid_row[col] = true;
                    }
                }
            }
        });
    SamplingGrid { height: spec.height, width: spec.width, coords, valid }
}

/// Dense `height x width x channels` map, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, WarpError> {
        if data.len() != height * width * channels {
            return Err(WarpError::DimensionMismatch {
                expected: format!("{height}x{width}x{channels} values"),
                actual: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WarpError::NonFinite);
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { height, width, channels, data }
    }

    /// Three channels holding raw 0..255 intensities.
    pub fn from_rgb(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&b| b as f64).collect();
        Self { height: img.height() as usize, width: img.width() as usize, channels: 3, data }
    }

    /// Rounds half-to-even and saturates to 8 bits; needs three channels.
    pub fn to_rgb(&self) -> Result<RgbImage, WarpError> {
        if self.channels != 3 {
            return Err(WarpError::DimensionMismatch { expected: "3 channels".into(), actual: format!("{}", self.channels) });
        }
        let raw = self.data.iter().map(|v| v.round_ties_even().clamp(0.0, 255.0) as u8).collect();
        Ok(RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer size matches"))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &FeatureMap, beta: f64) -> Result<FeatureMap, WarpError> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return Err(WarpError::DimensionMismatch {
                expected: format!("{}x{}x{}", self.height, self.width, self.channels),
                actual: format!("{}x{}x{}", other.height, other.width, other.channels),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| alpha * a + beta * b).collect();
        Ok(FeatureMap { data, ..*self })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Samples `src` at every grid cell. Invalid cells are zero in every
/// channel; valid cells are a convex combination of at most four source
/// pixels (neighbors past the border are clamped onto the edge row/column).
pub fn apply_grid(src: &FeatureMap, grid: &SamplingGrid, mode: Interpolation) -> Result<FeatureMap, WarpError> {
    let mut out = FeatureMap::zeros(grid.height, grid.width, src.channels);
    apply_grid_into(src, grid, mode, &mut out)?;
    Ok(out)
}

/// [`apply_grid`] into a preallocated output of the grid's size.
pub fn apply_grid_into(
    src: &FeatureMap,
    grid: &SamplingGrid,
    mode: Interpolation,
    out: &mut FeatureMap,
) -> Result<(), WarpError> {
    if (out.height, out.width, out.channels) != (grid.height, grid.width, src.channels) {
        return Err(WarpError::DimensionMismatch {
            expected: format!("{}x{}x{}", grid.height, grid.width, src.channels),
            actual: format!("{}x{}x{}", out.height, out.width, out.channels),
        });
    }
    if src.height == 0 || src.width == 0 {
        return Err(WarpError::DimensionMismatch { expected: "non-empty source".into(), actual: "0 pixels".into() });
    }
    let channels = src.channels;
    let row_len = grid.width * channels;
    if row_len == 0 {
        return Ok(());
    }
    out.data.par_chunks_mut(row_len).enumerate().for_each(|(row, out_row)| {
        for col in 0..grid.width {
            let dst = &mut out_row[col * channels..(col + 1) * channels];
            match grid.get(row, col) {
                None => dst.fill(0.0),
                Some([x, y]) => match mode {
                    Interpolation::Nearest => sample_nearest(src, x, y, dst),
                    Interpolation::Bilinear => sample_bilinear(src, x, y, dst),
                },
            }
        }
    });
    Ok(())
}

fn sample_nearest(src: &FeatureMap, x: f64, y: f64, dst: &mut [f64]) {
    let u = denormalize_coordinate(x, src.width as f64);
    let v = denormalize_coordinate(y, src.height as f64);
    let col = (u.floor().max(0.0) as usize).min(src.width - 1);
    let row = (v.floor().max(0.0) as usize).min(src.height - 1);
    dst.copy_from_slice(src.pixel(row, col));
}

fn sample_bilinear(src: &FeatureMap, x: f64, y: f64, dst: &mut [f64]) {
    // Pixel-index coordinates: pixel centers sit on integers.
    let a = denormalize_coordinate(x, src.width as f64) - 0.5;
    let b = denormalize_coordinate(y, src.height as f64) - 0.5;
    let (c0f, r0f) = (a.floor(), b.floor());
    let (tx, ty) = (a - c0f, b - r0f);
    let clamp_col = |c: f64| (c.max(0.0) as usize).min(src.width - 1);
    let clamp_row = |r: f64| (r.max(0.0) as usize).min(src.height - 1);
    let (c0, c1) = (clamp_col(c0f), clamp_col(c0f + 1.0));
    let (r0, r1) = (clamp_row(r0f), clamp_row(r0f + 1.0));
    let w00 = (1.0 - tx) * (1.0 - ty);
    let w01 = tx * (1.0 - ty);
    let w10 = (1.0 - tx) * ty;
    let w11 = tx * ty;
    let (p00, p01, p10, p11) = (src.pixel(r0, c0), src.pixel(r0, c1), src.pixel(r1, c0), src.pixel(r1, c1));
    for (ch, d) in dst.iter_mut().enumerate() {
        *d = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
    }
}

/// Resamples an 8-bit RGB image captured by `cam` into the target view.
pub fn rectify_image(
    img: &RgbImage,
    cam: &CameraModel,
    spec: &GridSpec,
    mode: Interpolation,
) -> Result<RgbImage, WarpError> {
    if [img.width(), img.height()] != cam.image_size() {
        return Err(WarpError::DimensionMismatch {
            expected: format!("{}x{} image for camera {}", cam.width(), cam.height(), cam.id()),
            actual: format!("{}x{}", img.width(), img.height()),
        });
    }
    let grid = build_grid(spec, cam);
    rectify_with_grid(img, &grid, mode)
}

/// [`rectify_image`] with a precomputed grid.
pub fn rectify_with_grid(img: &RgbImage, grid: &SamplingGrid, mode: Interpolation) -> Result<RgbImage, WarpError> {
    apply_grid(&FeatureMap::from_rgb(img), grid, mode)?.to_rgb()
}
