//! Pixel-compression sampling (fisheye vs pinhole footprint) and LOWESS.

use crate::boxes::{project_box, Box3D};
use crate::geometry::{CameraModel, LensKind};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("rig has no {0:?} camera")]
    MissingLensType(LensKind),
    #[error("lowess needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("lowess fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Object to be measured: an annotated box in the ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub id: String,
    pub bbox: Box3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSample {
    pub object_id: String,
    pub class: String,
    /// Distance of the box center from the ego origin.
    pub distance: f64,
    pub fisheye_area: f64,
    pub pinhole_area: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompressionSet {
    pub samples: Vec<CompressionSample>,
    /// Objects without a non-empty footprint in both lens types.
    pub skipped: usize,
}

/// Area ratio of two pixel rectangles, `(w_f h_f) / (w_p h_p)`.
pub fn area_ratio(fisheye_wh: (f64, f64), pinhole_wh: (f64, f64)) -> f64 {
    (fisheye_wh.0 * fisheye_wh.1) / (pinhole_wh.0 * pinhole_wh.1)
}

/// Largest projected bbox area of `b` over the cameras of one lens type.
pub fn max_area(b: &Box3D, cameras: &[CameraModel], kind: LensKind) -> Option<f64> {
    cameras
        .iter()
        .filter(|c| c.kind() == kind)
        .filter_map(|c| project_box(b, c).map(|bb| bb.area()))
        .fold(None, |acc, a| Some(acc.map_or(a, |m: f64| m.max(a))))
}

/// One sample per object visible (non-zero area) to both lens types.
pub fn compression_samples(objects: &[AnnotatedObject], cameras: &[CameraModel]) -> Result<CompressionSet, AnalysisError> {
    for kind in [LensKind::Fisheye, LensKind::Pinhole] {
        if !cameras.iter().any(|c| c.kind() == kind) {
            return Err(AnalysisError::MissingLensType(kind));
        }
    }
    let per_object: Vec<Option<CompressionSample>> = objects
        .par_iter()
        .map(|o| {
            let f = max_area(&o.bbox, cameras, LensKind::Fisheye)?;
            let p = max_area(&o.bbox, cameras, LensKind::Pinhole)?;
            if !(f > 0.0 && p > 0.0) {
                return None;
            }
            Some(CompressionSample {
                object_id: o.id.clone(),
                class: o.bbox.class.clone(),
                distance: o.bbox.center_vec().norm(),
                fisheye_area: f,
                pinhole_area: p,
                ratio: f / p,
            })
        })
        .collect();
    let skipped = per_object.iter().filter(|s| s.is_none()).count();
    Ok(CompressionSet { samples: per_object.into_iter().flatten().collect(), skipped })
}

/// At most `cap` samples per class, chosen uniformly with `seed`; input
/// order is preserved.
pub fn cap_per_class(samples: &[CompressionSample], cap: usize, seed: u64) -> Vec<CompressionSample> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(&s.class).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for idx in by_class.values() {
        if idx.len() <= cap {
            keep.extend_from_slice(idx);
        } else {
            keep.extend(sample(&mut rng, idx.len(), cap).into_iter().map(|k| idx[k]));
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| samples[i].clone()).collect()
}

pub fn write_samples_csv<W: Write>(mut w: W, samples: &[CompressionSample]) -> Result<(), AnalysisError> {
    writeln!(w, "object_id,class,distance,fisheye_area,pinhole_area,ratio")?;
    for s in samples {
        writeln!(w, "{},{},{},{},{},{}", s.object_id, s.class, s.distance, s.fisheye_area, s.pinhole_area, s.ratio)?;
    }
    Ok(())
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &[(f64, f64)]) -> Result<(), AnalysisError> {
    writeln!(w, "x,fit")?;
    for (x, y) in curve {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowessParams {
    pub frac: f64,
    pub iterations: usize,
}

impl Default for LowessParams {
    fn default() -> Self {
        Self { frac: 0.5, iterations: 3 }
    }
}

fn tricube(u: f64) -> f64 {
    if u < 1.0 {
        let t = 1.0 - u * u * u;
        t * t * t
    } else {
        0.0
    }
}

fn bisquare(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let t = 1.0 - u * u;
        t * t
    } else {
        0.0
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Neighbourhood size for `n` points: `floor(frac n)`, at least 2.
pub fn lowess_span(n: usize, frac: f64) -> usize {
    ((frac * n as f64 + 1e-10).floor() as usize).clamp(2, n)
}

/// Weighted linear fit evaluated at `x0`. Falls back to the weighted mean
/// when the weighted x spread vanishes, and to `None` when all weights are 0.
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], w: &[f64], x0: f64) -> Option<f64> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let xm = xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = ys.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(w).map(|(x, w)| w * (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(ys).zip(w).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let range = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    if sxx <= 1e-12 * sw * range * range {
        return Some(ym);
    }
    Some(ym + sxy / sxx * (x0 - xm))
}

/// Robust locally weighted linear regression. Returns `(x, fit)` at every
/// input point, sorted by x.
///
/// Each point is fitted from the `lowess_span` nearest neighbours with
/// tricube distance weights; then `iterations` passes re-weight by the
/// bisquare of residuals over 6 median absolute residuals.
pub fn lowess(x: &[f64], y: &[f64], params: LowessParams) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    if !(params.frac > 0.0 && params.frac <= 1.0) {
        return Err(AnalysisError::InvalidFraction(params.frac));
    }
    if let Some(i) = (0..n).find(|&i| !(x[i].is_finite() && y[i].is_finite())) {
        return Err(AnalysisError::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    if xs[0] == xs[n - 1] {
        let m = robust_mean(&ys, params.iterations);
        return Ok(xs.iter().map(|&xv| (xv, m)).collect());
    }

    let k = lowess_span(n, params.frac);
    let mut robust = vec![1.0; n];
    let mut fit = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut dist = vec![0.0; n];
    for pass in 0..=params.iterations {
        for i in 0..n {
            for j in 0..n {
                dist[j] = (xs[j] - xs[i]).abs();
            }
            let h = {
                let mut d = dist.clone();
                d.select_nth_unstable_by(k - 1, f64::total_cmp);
                d[k - 1]
            };
            for j in 0..n {
                let u = if h > 0.0 { dist[j] / h } else if dist[j] == 0.0 { 0.0 } else { f64::INFINITY };
                w[j] = tricube(u) * robust[j];
            }
            fit[i] = weighted_linear_fit(&xs, &ys, &w, xs[i]).unwrap_or(ys[i]);
        }
        if pass == params.iterations {
            break;
        }
        let mut resid: Vec<f64> = ys.iter().zip(&fit).map(|(y, f)| y - f).collect();
        let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
        let s = median(&mut abs);
        let scale = ys.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if s <= 1e-12 * scale {
            break;
        }
        for (r, rw) in resid.iter_mut().zip(robust.iter_mut()) {
            *rw = bisquare(*r / (6.0 * s));
        }
    }
    Ok(xs.into_iter().zip(fit).collect())
}

/// Mean re-weighted by `iterations` bisquare passes.
pub fn robust_mean(ys: &[f64], iterations: usize) -> f64 {
    let mut m = ys.iter().sum::<f64>() / ys.len() as f64;
    for _ in 0..iterations {
        let mut abs: Vec<f64> = ys.iter().map(|y| (y - m).abs()).collect();
        let s = median(&mut abs);
        if s <= 1e-12 * m.abs().max(1.0) {
            break;
        }
        let w: Vec<f64> = ys.iter().map(|y| bisquare((y - m) / (6.0 * s))).collect();
        let sw: f64 = w.iter().sum();
        if sw > 0.0 {
            m = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
        }
    }
    m
}

/// Scatter of `points`, the fitted `curve` and a dashed reference line at
/// y = 1, as a standalone SVG document.
pub fn render_svg(points: &[(f64, f64)], curve: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let all = points.iter().chain(curve);
    let x_max = all.clone().map(|p| p.0).fold(1.0, f64::max) * 1.05;
    let y_max = all.map(|p| p.1).fold(1.0, f64::max) * 1.1;
    let sx = |x: f64| M + x / x_max * (W - 2.0 * M);
    let sy = |y: f64| H - M - y / y_max * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2}" fill="none" stroke="black"/>"#,
        M,
        M,
        M,
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 4"/>"##,
        sx(0.0),
        sy(1.0),
        sx(x_max),
        sy(1.0)
    );
    for i in 0..=5 {
        let xv = x_max * i as f64 / 5.0;
        let yv = y_max * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{:.1}</text>"#, sx(xv), H - M + 14.0, xv);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.2}</text>"#, M - 4.0, sy(yv) + 3.0, yv);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (x, y) in points {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f77b4" fill-opacity="0.5"/>"##, sx(*x), sy(*y));
    }
    if !curve.is_empty() {
        let pts: Vec<String> = curve.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, pts.join(" "));
    }
    s.push_str("</svg>\n");
    s
}
