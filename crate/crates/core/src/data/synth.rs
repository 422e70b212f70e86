//! Seeded synthetic driving scenes rendered by analytic ray casting.
//!
//! The ego drives along world +x at constant speed. Objects circle the ego
//! on concentric rings, so every annotation is exact by construction. Each
//! camera pixel is a ray cast against flat-shaded cuboids, a soft-edged
//! checkerboard ground plane and a sky gradient.

use super::{to_json, write_text, DataError, DatasetManifest, Frame, RigCalibration, Scene, SCHEMA_VERSION};
use crate::boxes::{BBox2D, Box3D, DEFAULT_CLASSES};
use crate::evaluation::FrameBoxes;
use crate::geometry::{CameraModel, Extrinsics};
use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

/// `(length, width, height)` in meters and typical speed in m/s.
pub fn class_template(class: &str) -> ([f64; 3], f64) {
    match class {
        "car" => ([4.5, 1.9, 1.6], 8.0),
        "van" => ([5.2, 2.0, 2.2], 7.0),
        "truck" => ([8.0, 2.5, 3.2], 6.0),
        "bus" => ([11.0, 2.6, 3.2], 5.0),
        "pedestrian" => ([0.6, 0.6, 1.75], 1.4),
        "cyclist" => ([1.8, 0.7, 1.7], 4.0),
        _ => ([4.0, 2.0, 1.5], 5.0),
    }
}

/// Object on a circular path around the ego, in the ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub track_id: String,
    pub class: String,
    pub size: [f64; 3],
    pub color: [f64; 3],
    pub radius: f64,
    /// Signed, rad/s.
    pub angular_speed: f64,
    pub phase: f64,
}

impl SceneObject {
    /// Box at time `t` seconds, heading along the direction of travel.
    pub fn box_at(&self, t: f64) -> Box3D {
        let a = self.phase + self.angular_speed * t;
        let heading = a + FRAC_PI_2.copysign(self.angular_speed);
        Box3D::new([self.radius * a.cos(), self.radius * a.sin(), self.size[2] / 2.0], self.size, heading, self.class.as_str())
            .expect("templates have positive sizes")
            .with_track_id(self.track_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    /// m/s along world +x.
    pub ego_speed: f64,
    pub rate_hz: f64,
    pub start_us: i64,
}

impl SyntheticScene {
    /// `n_objects` objects with classes cycling through the default set, on
    /// rings at least 8 m out and 3 m apart.
    pub fn generate(seed: u64, n_objects: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objects = (0..n_objects)
            .map(|i| {
                let class = DEFAULT_CLASSES[(i + rng.gen_range(0..DEFAULT_CLASSES.len())) % DEFAULT_CLASSES.len()];
                let (size, speed) = class_template(class);
                let radius = 8.0 + 3.0 * i as f64 + rng.gen_range(0.0..2.0);
                let direction = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                SceneObject {
                    track_id: format!("obj-{i:03}"),
                    class: class.to_string(),
                    size,
                    color: [rng.gen_range(0.15..0.9), rng.gen_range(0.15..0.9), rng.gen_range(0.15..0.9)],
                    radius,
                    angular_speed: direction * speed * rng.gen_range(0.5..1.0) / radius,
                    phase: rng.gen_range(0.0..TAU),
                }
            })
            .collect();
        Self { scene_id: format!("synth-{seed}"), objects, ego_speed: 5.0, rate_hz: 10.0, start_us: 1_000_000 }
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / self.rate_hz
    }

    pub fn timestamp_us(&self, frame: usize) -> i64 {
        self.start_us + (frame as f64 * 1e6 / self.rate_hz).round() as i64
    }

    pub fn frame_id(&self, frame: usize) -> String {
        format!("{}-{frame:04}", self.scene_id)
    }

    pub fn ego_pose(&self, frame: usize) -> Extrinsics {
        Extrinsics::from_translation(Vector3::new(self.ego_speed * self.time(frame), 0.0, 0.0))
    }

    pub fn boxes(&self, frame: usize) -> Vec<Box3D> {
        let t = self.time(frame);
        self.objects.iter().map(|o| o.box_at(t)).collect()
    }

    pub fn render_objects(&self, frame: usize) -> Vec<RenderObject> {
        self.boxes(frame).into_iter().zip(&self.objects).map(|(b, o)| RenderObject { bbox: b, color: o.color }).collect()
    }

    /// Image path of `camera` in `frame`, relative to the manifest.
    pub fn image_path(&self, camera: &str, frame: usize) -> String {
        format!("images/{camera}/{}.png", self.frame_id(frame))
    }

    /// Manifest for `frames` frames; the images are expected at
    /// [`image_path`](Self::image_path).
    pub fn manifest(&self, rig: &RigCalibration, frames: usize) -> DatasetManifest {
        let frames = (0..frames)
            .map(|k| Frame {
                frame_id: self.frame_id(k),
                timestamp_us: self.timestamp_us(k),
                ego_pose: self.ego_pose(k),
                calibration: rig.rig_id.clone(),
                images: rig.cameras.iter().map(|c| (c.id().to_string(), self.image_path(c.id(), k))).collect(),
                annotations: self.boxes(k),
            })
            .collect();
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            calibrations: BTreeMap::from([(rig.rig_id.clone(), rig.clone())]),
            scenes: vec![Scene { scene_id: self.scene_id.clone(), frames }],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderObject {
    pub bbox: Box3D,
    pub color: [f64; 3],
}

const SKY_HORIZON: [f64; 3] = [0.78, 0.82, 0.88];
const SKY_ZENITH: [f64; 3] = [0.36, 0.52, 0.80];
const GROUND_DARK: [f64; 3] = [0.22, 0.24, 0.22];
const GROUND_LIGHT: [f64; 3] = [0.70, 0.70, 0.64];
const CHECKER_CELL: f64 = 2.0;
const FOG_DISTANCE: f64 = 25.0;

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn fog(color: [f64; 3], distance: f64) -> [f64; 3] {
    mix(SKY_HORIZON, color, (-distance / FOG_DISTANCE).exp())
}

/// Soft-edged checkerboard on world (x, y).
fn ground_color(x: f64, y: f64) -> [f64; 3] {
    let s = (std::f64::consts::PI * x / CHECKER_CELL).sin() * (std::f64::consts::PI * y / CHECKER_CELL).sin();
    mix(GROUND_DARK, GROUND_LIGHT, 0.5 + 0.5 * (3.0 * s).clamp(-1.0, 1.0))
}

fn sky_color(dir: &Vector3<f64>) -> [f64; 3] {
    mix(SKY_HORIZON, SKY_ZENITH, dir.z.clamp(0.0, 1.0).asin() / FRAC_PI_2)
}

/// Entry distance and outward face normal of a ray hitting `b` from
/// outside, both in the ego frame.
pub fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &Box3D) -> Option<(f64, Vector3<f64>)> {
    let (s, c) = b.yaw.sin_cos();
    let rel = origin - b.center_vec();
    let o = [c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z];
    let d = [c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z];
    let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut axis = (0usize, 0.0);
    for i in 0..3 {
        let half = b.size[i] / 2.0;
        if d[i].abs() < 1e-15 {
            if o[i].abs() > half {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((-half - o[i]) / d[i], (half - o[i]) / d[i]);
        let mut sign = -1.0;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
            sign = 1.0;
        }
        if t0 > t_near {
            t_near = t0;
            axis = (i, sign);
        }
        t_far = t_far.min(t1);
    }
    if t_near > t_far || t_near <= 1e-9 {
        return None;
    }
    let mut n_local = [0.0; 3];
    n_local[axis.0] = axis.1;
    let normal = Vector3::new(c * n_local[0] - s * n_local[1], s * n_local[0] + c * n_local[1], n_local[2]);
    Some((t_near, normal))
}

/// Radiance along an ego-frame ray.
pub fn shade(origin: &Vector3<f64>, dir: &Vector3<f64>, ego_pose: &Extrinsics, objects: &[RenderObject]) -> [f64; 3] {
    let light = Vector3::new(0.3, 0.5, 0.8).normalize();
    let mut best: Option<(f64, Vector3<f64>, [f64; 3])> = None;
    for o in objects {
        if let Some((t, n)) = ray_box(origin, dir, &o.bbox) {
            if best.as_ref().is_none_or(|b| t < b.0) {
                best = Some((t, n, o.color));
            }
        }
    }
    let ground_t = if dir.z < 0.0 { Some(-origin.z / dir.z) } else { None };
    match (best, ground_t) {
        (Some((t, n, col)), g) if g.is_none_or(|g| t < g) => {
            let lambert = 0.35 + 0.65 * n.dot(&light).max(0.0);
            fog([col[0] * lambert, col[1] * lambert, col[2] * lambert], t)
        }
        (_, Some(t)) => {
            let hit = ego_pose.transform_point(&(origin + dir * t));
            fog(ground_color(hit.x, hit.y), t)
        }
        _ => sky_color(dir),
    }
}

/// Per-camera sample rays, computed once and reused for every frame.
pub struct CameraRays {
    width: u32,
    height: u32,
    supersample: u32,
    origin: Vector3<f64>,
    /// Ego-frame unit rays, `None` outside the lens field of view.
    rays: Vec<Option<Vector3<f64>>>,
}

impl CameraRays {
    pub fn new(cam: &CameraModel, supersample: u32) -> Self {
        let s = supersample.max(1);
        let (w, h) = (cam.width(), cam.height());
        let rays = (0..h * s)
            .into_par_iter()
            .flat_map_iter(|sy| {
                (0..w * s).map(move |sx| {
                    let u = (sx as f64 + 0.5) / s as f64;
                    let v = (sy as f64 + 0.5) / s as f64;
                    cam.unproject(u, v).ok().map(|r| cam.extrinsics().rotate_vector(&r))
                })
            })
            .collect();
        Self { width: w, height: h, supersample: s, origin: cam.origin(), rays }
    }

    /// Box-filtered render; pixels whose samples all miss the lens are black.
    pub fn render(&self, ego_pose: &Extrinsics, objects: &[RenderObject]) -> RgbImage {
        let (w, s) = (self.width as usize, self.supersample as usize);
        let rows: Vec<Vec<u8>> = (0..self.height as usize)
            .into_par_iter()
            .map(|row| {
                let mut out = Vec::with_capacity(w * 3);
                for col in 0..w {
                    let mut acc = [0.0; 3];
                    for dy in 0..s {
                        for dx in 0..s {
                            if let Some(d) = &self.rays[(row * s + dy) * w * s + col * s + dx] {
                                let c = shade(&self.origin, d, ego_pose, objects);
                                for k in 0..3 {
                                    acc[k] += c[k];
                                }
                            }
                        }
                    }
                    let n = (s * s) as f64;
                    out.extend(acc.map(|v| (v / n * 255.0).round_ties_even().clamp(0.0, 255.0) as u8));
                }
                out
            })
            .collect();
        RgbImage::from_raw(self.width, self.height, rows.concat()).expect("buffer sized to the image")
    }

    /// Pixel-exact bbox of the pixels whose first sample ray hits `b`,
    /// ignoring every other object; `None` if no pixel does.
    pub fn silhouette(&self, b: &Box3D) -> Option<BBox2D> {
        let (w, s) = (self.width as usize, self.supersample as usize);
        let mut bb: Option<BBox2D> = None;
        for row in 0..self.height as usize {
            for col in 0..w {
                let Some(d) = &self.rays[(row * s) * w * s + col * s] else { continue };
                if ray_box(&self.origin, d, b).is_some() {
                    let (u, v) = (col as f64, row as f64);
                    bb = Some(match bb {
                        None => BBox2D { u_min: u, v_min: v, u_max: u + 1.0, v_max: v + 1.0 },
                        Some(x) => BBox2D {
                            u_min: x.u_min.min(u),
                            v_min: x.v_min.min(v),
                            u_max: x.u_max.max(u + 1.0),
                            v_max: x.v_max.max(v + 1.0),
                        },
                    });
                }
            }
        }
        bb
    }
}

pub fn render_camera(cam: &CameraModel, ego_pose: &Extrinsics, objects: &[RenderObject], supersample: u32) -> RgbImage {
    CameraRays::new(cam, supersample).render(ego_pose, objects)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub objects: usize,
    pub supersample: u32,
}

/// Generates the scene, renders every camera of every frame into
/// `out_dir/images/...` and writes `out_dir/manifest.json`.
pub fn write_dataset(config: &SynthConfig, rig: &RigCalibration, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    let scene = SyntheticScene::generate(config.seed, config.objects);
    let manifest = scene.manifest(rig, config.frames);
    manifest.validate()?;
    for cam in &rig.cameras {
        let rays = CameraRays::new(cam, config.supersample);
        for k in 0..config.frames {
            let img = rays.render(&scene.ego_pose(k), &scene.render_objects(k));
            let path = out_dir.join(scene.image_path(cam.id(), k));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
            }
            img.save_with_format(&path, image::ImageFormat::Png)?;
        }
    }
    write_text(&out_dir.join("manifest.json"), &to_json(&manifest))?;
    Ok(manifest)
}

/// Noise model turning ground truth into plausible detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std. dev. of the center offset in x and y, meters.
    pub center_sigma: f64,
    /// Std. dev. of the multiplicative log-size noise.
    pub size_sigma: f64,
    /// Std. dev. of the heading noise, radians.
    pub yaw_sigma: f64,
    /// Uniform half-width added to the base score of 0.5 + 0.5 u.
    pub score_jitter: f64,
    /// Probability of dropping a ground-truth box.
    pub drop_rate: f64,
    /// Expected false positives per frame.
    pub false_positives: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { center_sigma: 0.5, size_sigma: 0.1, yaw_sigma: 0.2, score_jitter: 0.1, drop_rate: 0.1, false_positives: 1.0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fields = [
            ("center_sigma", self.center_sigma),
            ("size_sigma", self.size_sigma),
            ("yaw_sigma", self.yaw_sigma),
            ("score_jitter", self.score_jitter),
            ("false_positives", self.false_positives),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DataError::invalid(format!("/{name}"), format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(DataError::invalid("/drop_rate", format!("must lie in [0, 1], got {}", self.drop_rate)));
        }
        Ok(())
    }
}

/// Scored predictions derived from `gt` frame by frame. Each frame draws
/// from its own stream seeded by `seed` and the frame index, so the result
/// does not depend on iteration order.
pub fn perturb(gt: &[FrameBoxes], noise: &NoiseConfig, seed: u64) -> Result<Vec<FrameBoxes>, DataError> {
    noise.validate()?;
    let normal = rand_distr::StandardNormal;
    gt.iter()
        .enumerate()
        .map(|(k, frame)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut boxes = Vec::new();
            for b in &frame.boxes {
                if rng.gen::<f64>() < noise.drop_rate {
                    continue;
                }
                let (dx, dy): (f64, f64) = (rng.sample(normal), rng.sample(normal));
                let ds: [f64; 3] = [rng.sample(normal), rng.sample(normal), rng.sample(normal)];
                let dyaw: f64 = rng.sample(normal);
                let center = [b.center[0] + noise.center_sigma * dx, b.center[1] + noise.center_sigma * dy, b.center[2]];
                let size = [0, 1, 2].map(|i| b.size[i] * (noise.size_sigma * ds[i]).exp());
                let score = (0.5 + 0.5 * rng.gen::<f64>() + noise.score_jitter * rng.gen_range(-1.0..=1.0)).clamp(0.0, 1.0);
                let mut p = Box3D::new(center, size, b.yaw + noise.yaw_sigma * dyaw, b.class.as_str())?.with_score(score)?;
                p.track_id = b.track_id.clone();
                boxes.push(p);
            }
            let n_fp = rand_distr::Poisson::new(noise.false_positives.max(1e-12)).map(|d| rng.sample(d) as usize).unwrap_or(0);
            for _ in 0..n_fp {
                let class = DEFAULT_CLASSES[rng.gen_range(0..DEFAULT_CLASSES.len())];
                let (size, _) = class_template(class);
                let center = [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), size[2] / 2.0];
                let score = rng.gen_range(0.0..0.6);
                boxes.push(Box3D::new(center, size, rng.gen_range(-3.0..3.0), class)?.with_score(score)?);
            }
            Ok(FrameBoxes { frame_id: frame.frame_id.clone(), boxes })
        })
        .collect()
}

/// Mean absolute difference per channel over `[margin, size - margin)` in
/// both axes, as a fraction of 255. Black pixels in either image are
/// skipped.
pub fn interior_mae(a: &RgbImage, b: &RgbImage, margin: u32) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for y in margin..a.height().saturating_sub(margin) {
        for x in margin..a.width().saturating_sub(margin) {
            let (Rgb(p), Rgb(q)) = (a.get_pixel(x, y), b.get_pixel(x, y));
            if p == &[0, 0, 0] || q == &[0, 0, 0] {
                continue;
            }
            for k in 0..3 {
                sum += (p[k] as f64 - q[k] as f64).abs();
                n += 1;
            }
        }
    }
    sum / n.max(1) as f64 / 255.0
}
