use crate::error::CliError;
use crate::{
    ApModeArg, CompressionArgs, EvalArgs, FdsArgs, GridArgs, Interp, Layout, LiftsplatArgs, Mode, PerturbArgs, RectifyArgs,
    SynthArgs,
};
use fisheye3d::analysis::{
    cap_per_class, compression_samples, lowess, render_svg, write_curve_csv, write_samples_csv, AnnotatedObject, LowessParams,
};
use fisheye3d::data::synth::{perturb as perturb_frames, write_dataset, NoiseConfig, SynthConfig};
use fisheye3d::data::{
    default_rig, load_calibration, load_manifest, load_predictions, parse_json, to_json, write_text, DatasetManifest,
    PredictionsFile, RigLayout,
};
use fisheye3d::evaluation::{evaluate, fds as fds_score, ApMode, EvalConfig};
use fisheye3d::frustum::{
    build_frustum, in_extent_mass, lift, splat_into, BevGrid, BevSpec, DepthBinning, DepthSpacing,
};
use fisheye3d::geometry::{CameraModel, LensKind};
use fisheye3d::warp::{apply_grid, build_grid, rectify_with_grid, FeatureMap, GridSpec, Interpolation, SamplingGrid};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("{}: no such file", path.display())))
    }
}

fn require_dir_target(path: &Path) -> Result<(), CliError> {
    if path.exists() && !path.is_dir() {
        return Err(CliError::usage(format!("{}: exists and is not a directory", path.display())));
    }
    Ok(())
}

fn require_file_target(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        return Err(CliError::usage(format!("{}: is a directory", path.display())));
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn save_png(img: &RgbImage, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

fn load_rgb(path: &Path) -> Result<RgbImage, CliError> {
    image::open(path).map(|i| i.to_rgb8()).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn layout(l: Layout) -> RigLayout {
    match l {
        Layout::Surround4f => RigLayout::Surround4f,
        Layout::Surround6p => RigLayout::Surround6p,
        Layout::FrontRear2f => RigLayout::FrontRear2f,
        Layout::LeftRight2f => RigLayout::LeftRight2f,
        Layout::Sides4p => RigLayout::Sides4p,
        Layout::Combined => RigLayout::Combined,
    }
}

fn interpolation(i: Interp) -> Interpolation {
    match i {
        Interp::Bilinear => Interpolation::Bilinear,
        Interp::Nearest => Interpolation::Nearest,
    }
}

fn grid_spec(mode: Mode, height: usize, width: usize, fov: Option<f64>, vfov: Option<f64>) -> Result<GridSpec, CliError> {
    let spec = match mode {
        Mode::Perspective => GridSpec::perspective(height, width, fov.unwrap_or(90.0).to_radians())?,
        Mode::Cylindrical | Mode::Equirect => {
            let h = 0.5 * fov.unwrap_or(180.0).to_radians();
            let v = 0.5 * vfov.unwrap_or(if mode == Mode::Cylindrical { 100.0 } else { 180.0 }).to_radians();
            if mode == Mode::Cylindrical {
                GridSpec::cylindrical(height, width, (-h, h), (-v, v))?
            } else {
                GridSpec::equirectangular(height, width, (-h, h), (-v, v))?
            }
        }
    };
    Ok(spec)
}

fn rectify_spec(g: &GridArgs) -> Result<GridSpec, CliError> {
    grid_spec(g.mode, g.height, g.width, g.fov, g.vfov)
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    require_dir_target(&a.out)?;
    if a.supersample == 0 {
        return Err(CliError::usage("--supersample must be at least 1"));
    }
    if a.frames == 0 {
        return Err(CliError::usage("--frames must be at least 1"));
    }
    let rig = default_rig(layout(a.rig), a.scale).map_err(|e| CliError::usage(e.to_string()))?;
    let config = SynthConfig { seed: a.seed, frames: a.frames, objects: a.objects, supersample: a.supersample };
    let manifest = write_dataset(&config, &rig, &a.out)?;
    write_text(&a.out.join("calibration.json"), &to_json(&rig))?;
    eprintln!(
        "synth: {} frames x {} cameras, {} boxes -> {}",
        a.frames,
        rig.cameras.len(),
        manifest.frames().map(|f| f.annotations.len()).sum::<usize>(),
        a.out.display()
    );
    Ok(())
}

fn check_camera<'a>(rig_cameras: &'a [CameraModel], id: &str) -> Result<&'a CameraModel, CliError> {
    rig_cameras.iter().find(|c| c.id() == id).ok_or_else(|| CliError::data(format!("camera '{id}' not in the rig")))
}

fn check_size(img: &RgbImage, cam: &CameraModel, path: &Path) -> Result<(), CliError> {
    if [img.width(), img.height()] != cam.image_size() {
        return Err(CliError::data(format!(
            "{}: image is {}x{}, camera {} expects {}x{}",
            path.display(),
            img.width(),
            img.height(),
            cam.id(),
            cam.width(),
            cam.height()
        )));
    }
    Ok(())
}

pub fn rectify(a: &RectifyArgs) -> Result<(), CliError> {
    require_file(&a.input)?;
    let spec = rectify_spec(&a.grid)?;
    let mode = interpolation(a.interp);
    let is_manifest = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_manifest {
        let calib = a.calib.as_ref().ok_or_else(|| CliError::usage("--calib is required when --input is an image"))?;
        require_file(calib)?;
        require_file_target(&a.out)?;
        let rig = load_calibration(calib)?;
        let cam = check_camera(&rig.cameras, &a.camera)?;
        let img = load_rgb(&a.input)?;
        check_size(&img, cam, &a.input)?;
        let out = rectify_with_grid(&img, &build_grid(&spec, cam), mode)?;
        save_png(&out, &a.out)?;
        eprintln!("rectify: 1 image -> {}", a.out.display());
        return Ok(());
    }
    require_dir_target(&a.out)?;
    let manifest = load_manifest(&a.input)?;
    let root = manifest_dir(&a.input);
    let mut work = Vec::new();
    for frame in manifest.frames() {
        let rig = manifest.rig_for(frame).expect("validated manifest resolves calibrations");
        let cam = check_camera(&rig.cameras, &a.camera)?;
        let Some(rel) = frame.images.get(&a.camera) else { continue };
        let path = root.join(rel);
        require_file(&path)?;
        work.push((frame.frame_id.clone(), rig.rig_id.clone(), cam, path));
    }
    if work.is_empty() {
        return Err(CliError::data(format!("no frame has an image for camera '{}'", a.camera)));
    }
    let mut grids: BTreeMap<String, SamplingGrid> = BTreeMap::new();
    for (frame_id, rig_id, cam, path) in &work {
        let grid = grids.entry(rig_id.clone()).or_insert_with(|| build_grid(&spec, cam));
        let img = load_rgb(path)?;
        check_size(&img, cam, path)?;
        save_png(&rectify_with_grid(&img, grid, mode)?, &a.out.join(format!("{frame_id}.png")))?;
    }
    eprintln!("rectify: {} images -> {}", work.len(), a.out.display());
    Ok(())
}

fn parse_fields(text: &str, flag: &str, n_min: usize, n_max: usize) -> Result<Vec<String>, CliError> {
    let parts: Vec<String> = text.split(':').map(str::to_string).collect();
    if parts.len() < n_min || parts.len() > n_max {
        return Err(CliError::usage(format!("{flag}: cannot parse '{text}'")));
    }
    Ok(parts)
}

fn parse_f64(s: &str, flag: &str) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|_| CliError::usage(format!("{flag}: '{s}' is not a number")))
}

pub fn parse_binning(text: &str) -> Result<DepthBinning, CliError> {
    let p = parse_fields(text, "--binning", 3, 4)?;
    let bins = p[2].trim().parse::<usize>().map_err(|_| CliError::usage(format!("--binning: '{}' is not a count", p[2])))?;
    let spacing = match p.get(3).map(|s| s.trim()) {
        None | Some("uniform") => DepthSpacing::Uniform,
        Some("quadratic") => DepthSpacing::Quadratic,
        Some(other) => return Err(CliError::usage(format!("--binning: unknown spacing '{other}'"))),
    };
    Ok(DepthBinning::new(parse_f64(&p[0], "--binning")?, parse_f64(&p[1], "--binning")?, bins, spacing)?)
}

pub fn parse_bev(size: &str, z_range: &str) -> Result<BevSpec, CliError> {
    let p = parse_fields(size, "--bev-size", 2, 2)?;
    let z = parse_fields(z_range, "--z-range", 2, 2)?;
    let mut spec = BevSpec::square(parse_f64(&p[0], "--bev-size")?, parse_f64(&p[1], "--bev-size")?)?;
    spec.z_min = parse_f64(&z[0], "--z-range")?;
    spec.z_max = parse_f64(&z[1], "--z-range")?;
    if !(spec.z_min < spec.z_max) {
        return Err(CliError::usage(format!("--z-range: '{z_range}' is empty")));
    }
    spec.dims()?;
    Ok(spec)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitsEntry {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct LiftsplatSummary<'a> {
    frame_id: &'a str,
    cameras: Vec<&'a str>,
    grid: &'a GridSpec,
    binning: &'a DepthBinning,
    bev: &'a BevSpec,
    lifted_mass: f64,
    in_extent_mass: f64,
    bev_mass: f64,
    relative_error: f64,
}

pub fn liftsplat(a: &LiftsplatArgs) -> Result<(), CliError> {
    require_file(&a.dataset)?;
    require_dir_target(&a.out)?;
    let binning = parse_binning(&a.binning)?;
    let bev_spec = parse_bev(&a.bev_size, &a.z_range)?;
    let spec = grid_spec(a.grid, a.grid_height, a.grid_width, a.fov, None)?;
    let logits: Option<BTreeMap<String, LogitsEntry>> = match &a.logits {
        Some(p) => {
            require_file(p)?;
            Some(parse_json(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?)
        }
        None => None,
    };
    let manifest = load_manifest(&a.dataset)?;
    let frame = match &a.frame {
        Some(id) => manifest.frame(id).ok_or_else(|| CliError::data(format!("frame '{id}' not in the manifest")))?,
        None => manifest.frames().next().ok_or_else(|| CliError::data("manifest has no frames"))?,
    };
    let rig = manifest.rig_for(frame).expect("validated manifest resolves calibrations");
    let cams: Vec<&CameraModel> = if a.camera_set.is_empty() {
        rig.of_kind(LensKind::Fisheye).collect()
    } else {
        a.camera_set.iter().map(|id| check_camera(&rig.cameras, id)).collect::<Result<_, _>>()?
    };
    if cams.is_empty() {
        return Err(CliError::data("no cameras selected"));
    }
    let root = manifest_dir(&a.dataset);
    let (h, w, d) = (spec.height, spec.width, binning.bins);
    let mut inputs = Vec::new();
    for cam in &cams {
        let rel = frame
            .images
            .get(cam.id())
            .ok_or_else(|| CliError::data(format!("frame '{}' has no image for '{}'", frame.frame_id, cam.id())))?;
        let path = root.join(rel);
        require_file(&path)?;
        let logit_map = match logits.as_ref().and_then(|l| l.get(cam.id())) {
            Some(e) => {
                if (e.height, e.width, e.depth) != (h, w, d) {
                    return Err(CliError::data(format!(
                        "logits for '{}' are {}x{}x{}, grid needs {h}x{w}x{d}",
                        cam.id(),
                        e.height,
                        e.width,
                        e.depth
                    )));
                }
                FeatureMap::from_data(h, w, d, e.data.clone()).map_err(|e| CliError::data(e.to_string()))?
            }
            None => FeatureMap::zeros(h, w, d),
        };
        inputs.push((*cam, path, logit_map));
    }
    let mut bev = BevGrid::zeros(bev_spec.clone(), 3)?;
    let (mut lifted, mut in_extent) = (0.0, 0.0);
    for (cam, path, logit_map) in &inputs {
        let img = load_rgb(path)?;
        check_size(&img, cam, path)?;
        let raw = apply_grid(&FeatureMap::from_rgb(&img), &build_grid(&spec, cam), Interpolation::Bilinear)?;
        let features = raw.combine(1.0 / 255.0, &raw, 0.0)?;
        let volume = lift(&features, logit_map)?;
        let frustum = build_frustum(&spec.rays(), h, w, &binning, cam.extrinsics(), cam.id())?;
        splat_into(&mut bev, &volume, &frustum)?;
        lifted += volume.total_mass();
        in_extent += in_extent_mass(&volume, &frustum, &bev_spec)?;
    }
    let bev_mass = bev.total_mass();
    let relative_error = (bev_mass - in_extent).abs() / in_extent.abs().max(1.0);
    if relative_error > 1e-9 {
        return Err(CliError::numerical(format!("BEV mass {bev_mass} differs from in-extent lifted mass {in_extent}")));
    }
    let mut csv = Vec::new();
    bev.write_csv(&mut csv)?;
    let summary = LiftsplatSummary {
        frame_id: &frame.frame_id,
        cameras: cams.iter().map(|c| c.id()).collect(),
        grid: &spec,
        binning: &binning,
        bev: &bev_spec,
        lifted_mass: lifted,
        in_extent_mass: in_extent,
        bev_mass,
        relative_error,
    };
    write_bytes(&a.out.join("bev.csv"), &csv)?;
    bev.heatmap().save_with_format(a.out.join("bev.png"), image::ImageFormat::Png)?;
    write_text(&a.out.join("summary.json"), &to_json(&summary))?;
    eprintln!("liftsplat: frame {} with {} cameras, BEV mass {bev_mass:.6} -> {}", frame.frame_id, cams.len(), a.out.display());
    Ok(())
}

pub fn eval_config(a: &EvalArgs) -> Result<EvalConfig, CliError> {
    let mut config = match &a.config {
        Some(p) => {
            require_file(p)?;
            parse_json::<EvalConfig>(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?
        }
        None => EvalConfig::default(),
    };
    if let Some(t) = &a.thresholds {
        config.thresholds = t.clone();
    }
    if let Some(t) = a.tp_threshold {
        config.tp_threshold = t;
    }
    if let Some(b) = &a.bins {
        config.distance_bins = b.clone();
    }
    if a.max_range.is_some() {
        config.max_range = a.max_range;
    }
    if let Some(c) = &a.classes {
        config.classes = c.clone();
    }
    if let Some(m) = a.ap_mode {
        config.ap_mode = match m {
            ApModeArg::Nuscenes => ApMode::Nuscenes,
            ApModeArg::Trapezoid => ApMode::Trapezoid,
        };
    }
    config.validate()?;
    Ok(config)
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    require_file(&a.gt)?;
    require_file(&a.pred)?;
    require_file_target(&a.out)?;
    if let Some(p) = &a.class_csv {
        require_file_target(p)?;
    }
    let config = eval_config(a)?;
    let manifest: DatasetManifest = load_manifest(&a.gt)?;
    let preds = load_predictions(&a.pred)?;
    preds.validate_against(&manifest)?;
    let report = evaluate(&manifest.ground_truth(), &preds.frames, &config)?;
    report.validate()?;
    write_text(&a.out, &to_json(&report))?;
    if let Some(p) = &a.class_csv {
        let mut csv = Vec::new();
        report.write_class_csv(&mut csv, &config.thresholds)?;
        write_bytes(p, &csv)?;
    }
    eprintln!(
        "eval: mAP {:.4} mATE {:.4} mASE {:.4} mAOE {:.4} FDS {:.4}",
        report.map, report.mate, report.mase, report.maoe, report.fds
    );
    Ok(())
}

pub fn compression(a: &CompressionArgs) -> Result<(), CliError> {
    require_file(&a.dataset)?;
    require_dir_target(&a.out)?;
    if !(a.lowess_frac > 0.0 && a.lowess_frac <= 1.0) {
        return Err(CliError::usage(format!("--lowess-frac {} outside (0, 1]", a.lowess_frac)));
    }
    let manifest = load_manifest(&a.dataset)?;
    let mut by_rig: BTreeMap<&str, Vec<AnnotatedObject>> = BTreeMap::new();
    for frame in manifest.frames() {
        let objects = by_rig.entry(frame.calibration.as_str()).or_default();
        for (i, b) in frame.annotations.iter().enumerate() {
            let tag = b.track_id.clone().unwrap_or_else(|| i.to_string());
            objects.push(AnnotatedObject { id: format!("{}/{tag}", frame.frame_id), bbox: b.clone() });
        }
    }
    let (mut samples, mut skipped) = (Vec::new(), 0);
    for (rig_id, objects) in &by_rig {
        let set = compression_samples(objects, &manifest.calibrations[*rig_id].cameras)?;
        samples.extend(set.samples);
        skipped += set.skipped;
    }
    if let Some(cap) = a.per_class_cap {
        samples = cap_per_class(&samples, cap, a.seed);
    }
    let x: Vec<f64> = samples.iter().map(|s| s.distance).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let curve = lowess(&x, &y, LowessParams { frac: a.lowess_frac, iterations: a.lowess_iterations })?;
    let points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    let svg = render_svg(&points, &curve, "distance (m)", "fisheye / pinhole area");
    let (mut s_csv, mut c_csv) = (Vec::new(), Vec::new());
    write_samples_csv(&mut s_csv, &samples)?;
    write_curve_csv(&mut c_csv, &curve)?;
    write_bytes(&a.out.join("samples.csv"), &s_csv)?;
    write_bytes(&a.out.join("curve.csv"), &c_csv)?;
    write_bytes(&a.out.join("compression.svg"), svg.as_bytes())?;
    eprintln!("compression: {} samples ({skipped} objects not seen by both lens types) -> {}", samples.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct FdsResult {
    map: f64,
    mate: f64,
    mase: f64,
    maoe: f64,
    fds: f64,
}

pub fn fds(a: &FdsArgs) -> Result<(), CliError> {
    if let Some(p) = &a.out {
        require_file_target(p)?;
    }
    for (flag, v) in [("--map", a.map), ("--mate", a.mate), ("--mase", a.mase), ("--maoe", a.maoe)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CliError::usage(format!("{flag} must be finite and non-negative, got {v}")));
        }
    }
    if a.map > 1.0 {
        return Err(CliError::usage(format!("--map must not exceed 1, got {}", a.map)));
    }
    let r = FdsResult { map: a.map, mate: a.mate, mase: a.mase, maoe: a.maoe, fds: fds_score(a.map, a.mate, a.mase, a.maoe) };
    let line = serde_json::to_string(&r).expect("plain struct serializes");
    println!("{line}");
    if let Some(p) = &a.out {
        write_text(p, &to_json(&r))?;
    }
    Ok(())
}

pub fn perturb(a: &PerturbArgs) -> Result<(), CliError> {
    require_file(&a.gt)?;
    require_file_target(&a.out)?;
    let noise = NoiseConfig {
        center_sigma: a.center_sigma,
        size_sigma: a.size_sigma,
        yaw_sigma: a.yaw_sigma,
        score_jitter: a.score_jitter,
        drop_rate: a.drop_rate,
        false_positives: a.false_positives,
    };
    noise.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let manifest = load_manifest(&a.gt)?;
    let preds = PredictionsFile::new(perturb_frames(&manifest.ground_truth(), &noise, a.seed)?);
    write_text(&a.out, &to_json(&preds))?;
    eprintln!("perturb: {} boxes over {} frames -> {}", preds.frames.iter().map(|f| f.boxes.len()).sum::<usize>(), preds.frames.len(), a.out.display());
    Ok(())
}
