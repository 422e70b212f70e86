//! Dataset schema, JSON readers/writers, frame sub-sampling and splits, and
//! the synthetic scene generator.
//!
//! All metadata files carry `"schema_version": 1`. Field order is fixed by
//! the type definitions and maps are sorted, so writing a loaded file
//! reproduces it byte for byte.

mod rig;
pub mod synth;

pub use rig::{default_fisheye_intrinsics, default_rig, RigCalibration, RigLayout, FISHEYE_IDS, PINHOLE_IDS};

use crate::boxes::{Box3D, BoxError};
use crate::evaluation::FrameBoxes;
use crate::geometry::{Extrinsics, GeometryError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::{Component, Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    /// Parse or schema failure at a JSON-pointer location.
    #[error("{pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Box(#[from] BoxError),
}

impl DataError {
    pub fn invalid(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        let pointer = pointer.into();
        DataError::Schema { pointer: if pointer.is_empty() { "/".into() } else { pointer }, message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

/// Deserializes `text`, reporting failures with the JSON pointer of the
/// offending value.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            use serde_path_to_error::Segment;
            match seg {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => pointer.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
                Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                Segment::Unknown => pointer.push_str("/?"),
            }
        }
        DataError::invalid(pointer, e.into_inner().to_string())
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("schema types always serialize");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub frame_id: String,
    pub timestamp_us: i64,
    /// Ego-to-world transform.
    pub ego_pose: Extrinsics,
    /// Key into [`DatasetManifest::calibrations`].
    pub calibration: String,
    /// Camera id to image path relative to the manifest directory.
    pub images: BTreeMap<String, String>,
    /// Ground-truth boxes in the ego frame.
    pub annotations: Vec<Box3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub scene_id: String,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub calibrations: BTreeMap<String, RigCalibration>,
    pub scenes: Vec<Scene>,
}

fn check_relative(p: &str) -> bool {
    let path = Path::new(p);
    !p.is_empty() && !path.is_absolute() && path.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DataError::invalid("/schema_version", format!("unsupported schema version {}", self.schema_version)));
        }
        for (key, rig) in &self.calibrations {
            let ptr = format!("/calibrations/{key}");
            rig.validate(&ptr)?;
            if rig.rig_id != *key {
                return Err(DataError::invalid(format!("{ptr}/rig_id"), format!("rig id '{}' differs from its key '{key}'", rig.rig_id)));
            }
        }
        let mut scene_ids = HashSet::new();
        let mut frame_ids = HashSet::new();
        for (si, scene) in self.scenes.iter().enumerate() {
            if !scene_ids.insert(scene.scene_id.as_str()) {
                return Err(DataError::invalid(format!("/scenes/{si}/scene_id"), format!("duplicate scene id '{}'", scene.scene_id)));
            }
            for (fi, frame) in scene.frames.iter().enumerate() {
                let ptr = format!("/scenes/{si}/frames/{fi}");
                if !frame_ids.insert(frame.frame_id.as_str()) {
                    return Err(DataError::invalid(format!("{ptr}/frame_id"), format!("duplicate frame id '{}'", frame.frame_id)));
                }
                if fi > 0 && frame.timestamp_us <= scene.frames[fi - 1].timestamp_us {
                    return Err(DataError::invalid(
                        format!("{ptr}/timestamp_us"),
                        format!(
                            "frame '{}' timestamp {} is not after the previous frame's {}",
                            frame.frame_id,
                            frame.timestamp_us,
                            scene.frames[fi - 1].timestamp_us
                        ),
                    ));
                }
                let rig = self.calibrations.get(&frame.calibration).ok_or_else(|| {
                    DataError::invalid(format!("{ptr}/calibration"), format!("unknown calibration '{}'", frame.calibration))
                })?;
                for (cam, path) in &frame.images {
                    if rig.camera(cam).is_none() {
                        return Err(DataError::invalid(format!("{ptr}/images/{cam}"), format!("camera '{cam}' not in rig '{}'", rig.rig_id)));
                    }
                    if !check_relative(path) {
                        return Err(DataError::invalid(format!("{ptr}/images/{cam}"), format!("image path '{path}' must be relative to the manifest")));
                    }
                }
                if let Some(ai) = frame.annotations.iter().position(|b| b.score.is_some()) {
                    return Err(DataError::invalid(format!("{ptr}/annotations/{ai}/score"), "ground-truth boxes carry no score"));
                }
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.scenes.iter().flat_map(|s| s.frames.iter())
    }

    pub fn frame(&self, id: &str) -> Option<&Frame> {
        self.frames().find(|f| f.frame_id == id)
    }

    pub fn rig_for(&self, frame: &Frame) -> Option<&RigCalibration> {
        self.calibrations.get(&frame.calibration)
    }

    /// Annotations of every frame in manifest order.
    pub fn ground_truth(&self) -> Vec<FrameBoxes> {
        self.frames().map(|f| FrameBoxes { frame_id: f.frame_id.clone(), boxes: f.annotations.clone() }).collect()
    }

    /// Keeps scenes and calibrations, replaces the frame lists.
    fn with_frames(&self, frames: Vec<Vec<Frame>>) -> Self {
        Self {
            schema_version: self.schema_version,
            calibrations: self.calibrations.clone(),
            scenes: self.scenes.iter().zip(frames).map(|(s, f)| Scene { scene_id: s.scene_id.clone(), frames: f }).collect(),
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest, DataError> {
    let m: DatasetManifest = parse_json(text)?;
    m.validate()?;
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    parse_manifest(&read_text(path)?)
}

pub fn save_manifest(m: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    m.validate()?;
    write_text(path, &to_json(m))
}

pub fn parse_calibration(text: &str) -> Result<RigCalibration, DataError> {
    let rig: RigCalibration = parse_json(text)?;
    rig.validate("")?;
    Ok(rig)
}

pub fn load_calibration(path: &Path) -> Result<RigCalibration, DataError> {
    parse_calibration(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionsFile {
    pub schema_version: u32,
    pub frames: Vec<FrameBoxes>,
}

impl PredictionsFile {
    pub fn new(frames: Vec<FrameBoxes>) -> Self {
        Self { schema_version: SCHEMA_VERSION, frames }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DataError::invalid("/schema_version", format!("unsupported schema version {}", self.schema_version)));
        }
        let mut seen = HashSet::new();
        for (fi, f) in self.frames.iter().enumerate() {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(DataError::invalid(format!("/frames/{fi}/frame_id"), format!("duplicate frame id '{}'", f.frame_id)));
            }
            if let Some(bi) = f.boxes.iter().position(|b| b.score.is_none()) {
                return Err(DataError::invalid(format!("/frames/{fi}/boxes/{bi}/score"), "predictions need a score"));
            }
        }
        Ok(())
    }

    /// Every frame id must exist in `manifest`.
    pub fn validate_against(&self, manifest: &DatasetManifest) -> Result<(), DataError> {
        let ids: HashSet<&str> = manifest.frames().map(|f| f.frame_id.as_str()).collect();
        match self.frames.iter().position(|f| !ids.contains(f.frame_id.as_str())) {
            Some(fi) => Err(DataError::invalid(
                format!("/frames/{fi}/frame_id"),
                format!("frame '{}' not in the ground-truth manifest", self.frames[fi].frame_id),
            )),
            None => Ok(()),
        }
    }
}

pub fn parse_predictions(text: &str) -> Result<PredictionsFile, DataError> {
    let p: PredictionsFile = parse_json(text)?;
    p.validate()?;
    Ok(p)
}

pub fn load_predictions(path: &Path) -> Result<PredictionsFile, DataError> {
    parse_predictions(&read_text(path)?)
}

/// Median spacing of a scene's timestamps as a rate in Hz; `None` for
/// scenes with fewer than two frames.
pub fn native_rate(frames: &[Frame]) -> Option<f64> {
    if frames.len() < 2 {
        return None;
    }
    let mut dt: Vec<i64> = frames.windows(2).map(|w| w[1].timestamp_us - w[0].timestamp_us).collect();
    dt.sort_unstable();
    let n = dt.len();
    let median = if n % 2 == 1 { dt[n / 2] as f64 } else { (dt[n / 2 - 1] + dt[n / 2]) as f64 / 2.0 };
    Some(1e6 / median)
}

/// Indices of the frames nearest to `t0 + k / hz` for `k = 0, 1, ...` up to
/// the last timestamp; equidistant candidates resolve to the earlier frame.
/// Repeated picks are kept once.
pub fn nearest_grid_indices(timestamps: &[i64], hz: f64) -> Vec<usize> {
    let Some(&t0) = timestamps.first() else { return Vec::new() };
    let last = *timestamps.last().unwrap();
    let period = 1e6 / hz;
    let mut out: Vec<usize> = Vec::new();
    let mut k = 0u64;
    loop {
        let target = t0 as f64 + k as f64 * period;
        if target > last as f64 + 1e-6 {
            break;
        }
        let j = timestamps.partition_point(|&t| (t as f64) < target);
        let pick = if j == 0 {
            0
        } else if j == timestamps.len() {
            j - 1
        } else if target - timestamps[j - 1] as f64 <= timestamps[j] as f64 - target {
            j - 1
        } else {
            j
        };
        if out.last() != Some(&pick) {
            out.push(pick);
        }
        k += 1;
    }
    out
}

/// Re-samples every scene to `hz` by nearest-timestamp selection.
pub fn subsample(m: &DatasetManifest, hz: f64) -> Result<DatasetManifest, DataError> {
    if !(hz > 0.0 && hz.is_finite()) {
        return Err(DataError::invalid("/", format!("sampling rate must be positive, got {hz}")));
    }
    let mut frames = Vec::with_capacity(m.scenes.len());
    for (si, scene) in m.scenes.iter().enumerate() {
        if let Some(native) = native_rate(&scene.frames) {
            if hz > native * (1.0 + 1e-9) {
                return Err(DataError::invalid(
                    format!("/scenes/{si}"),
                    format!("requested {hz} Hz exceeds the native {native} Hz of scene '{}'", scene.scene_id),
                ));
            }
        }
        let ts: Vec<i64> = scene.frames.iter().map(|f| f.timestamp_us).collect();
        frames.push(nearest_grid_indices(&ts, hz).into_iter().map(|i| scene.frames[i].clone()).collect());
    }
    Ok(m.with_frames(frames))
}

/// Per-scene temporal split: the first `floor(n * fraction)` frames train,
/// the rest test.
pub fn split(m: &DatasetManifest, train_fraction: f64) -> Result<(DatasetManifest, DatasetManifest, Vec<String>), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::invalid("/", format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut degenerate = Vec::new();
    for scene in &m.scenes {
        let n = scene.frames.len();
        let k = ((n as f64 * train_fraction + 1e-9).floor() as usize).min(n);
        if k == 0 || k == n {
            degenerate.push(scene.scene_id.clone());
        }
        train.push(scene.frames[..k].to_vec());
        test.push(scene.frames[k..].to_vec());
    }
    Ok((m.with_frames(train), m.with_frames(test), degenerate))
}
