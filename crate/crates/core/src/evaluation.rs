//! Center-distance AP, TP error means and the composite detection score.

use crate::boxes::{aligned_iou, center_distance_2d, yaw_error, Box3D, DEFAULT_CLASSES};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("prediction frame '{0}' has no ground-truth frame")]
    UnknownFrame(String),
    #[error("duplicate frame id '{0}'")]
    DuplicateFrame(String),
    #[error("prediction {index} in frame '{frame}' has no score")]
    MissingScore { frame: String, index: usize },
    #[error("report inconsistent: {0}")]
    InvalidReport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// PR-curve integration rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// 101-point recall grid, recall and precision below 0.1 discarded,
    /// normalized by 0.9.
    #[default]
    Nuscenes,
    /// Plain trapezoid over the raw PR points, starting at recall 0.
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub classes: Vec<String>,
    pub tp_threshold: f64,
    /// Boxes whose ground-plane range exceeds this are dropped up front.
    #[serde(default)]
    pub max_range: Option<f64>,
    /// Cumulative `0..R` sub-evaluations.
    #[serde(default)]
    pub distance_bins: Vec<f64>,
    #[serde(default)]
    pub ap_mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.5, 1.0, 2.0, 4.0],
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            tp_threshold: 2.0,
            max_range: None,
            distance_bins: Vec::new(),
            ap_mode: ApMode::Nuscenes,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.thresholds.is_empty() {
            return bad("no distance thresholds".into());
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) || self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("thresholds must be positive and strictly increasing: {:?}", self.thresholds));
        }
        if self.classes.is_empty() {
            return bad("empty class set".into());
        }
        let mut seen = self.classes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return bad("duplicate class names".into());
        }
        if !(self.tp_threshold.is_finite() && self.tp_threshold > 0.0) {
            return bad(format!("tp threshold {}", self.tp_threshold));
        }
        if let Some(r) = self.max_range {
            if !(r > 0.0) {
                return bad(format!("max range {r}"));
            }
        }
        if self.distance_bins.iter().any(|b| !(b.is_finite() && *b > 0.0)) || self.distance_bins.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("distance bins must be positive and strictly increasing: {:?}", self.distance_bins));
        }
        Ok(())
    }
}

/// All boxes of one frame, in the ego frame of that frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameBoxes {
    pub frame_id: String,
    pub boxes: Vec<Box3D>,
}

/// Greedy assignment inside one frame for one class and threshold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(gt index, pred index)` into the slices given to [`match_greedy`].
    pub pairs: Vec<(usize, usize)>,
    /// Per prediction of the class: the gt it claimed, in slice order.
    pub pred_match: Vec<(usize, Option<usize>)>,
    pub unmatched_gts: usize,
    pub unmatched_preds: usize,
}

/// Per-pair error terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairErrors {
    pub ate: f64,
    pub ase: f64,
    pub aoe: f64,
}

pub fn pair_errors(gt: &Box3D, pred: &Box3D) -> PairErrors {
    PairErrors { ate: center_distance_2d(gt, pred), ase: 1.0 - aligned_iou(gt, pred), aoe: yaw_error(gt, pred) }
}

fn score_of(b: &Box3D) -> f64 {
    b.score.unwrap_or(0.0)
}

/// Predictions of `class` in descending score (stable on index) each claim
/// the nearest unclaimed gt of `class` with center distance strictly below
/// `threshold`; equal distances go to the lower gt index.
pub fn match_greedy(gts: &[Box3D], preds: &[Box3D], class: &str, threshold: f64) -> MatchResult {
    let gt_idx: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].class == class).collect();
    let mut pred_idx: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].class == class).collect();
    pred_idx.sort_by(|&a, &b| score_of(&preds[b]).total_cmp(&score_of(&preds[a])).then(a.cmp(&b)));
    let mut claimed = vec![false; gts.len()];
    let mut out = MatchResult::default();
    for &p in &pred_idx {
        let mut best: Option<(f64, usize)> = None;
        for &g in &gt_idx {
            if claimed[g] {
                continue;
            }
            let d = center_distance_2d(&gts[g], &preds[p]);
            if d < threshold && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, g));
            }
        }
        if let Some((_, g)) = best {
            claimed[g] = true;
            out.pairs.push((g, p));
        }
        out.pred_match.push((p, best.map(|(_, g)| g)));
    }
    out.pred_match.sort_by_key(|(p, _)| *p);
    out.unmatched_gts = gt_idx.len() - out.pairs.len();
    out.unmatched_preds = pred_idx.len() - out.pairs.len();
    out
}

/// One prediction in the cross-frame ranked list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedDetection {
    pub score: f64,
    pub frame: usize,
    pub index: usize,
    pub true_positive: bool,
}

/// Sorts by score descending, then frame position, then prediction index.
pub fn rank_detections(dets: &mut [RankedDetection]) {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.frame.cmp(&b.frame)).then(a.index.cmp(&b.index)));
}

/// `(recall, precision)` after each ranked detection.
pub fn pr_curve(ranked: &[RankedDetection], n_gt: usize) -> Vec<(f64, f64)> {
    let (mut tp, mut fp) = (0usize, 0usize);
    ranked
        .iter()
        .map(|d| {
            if d.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            (tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect()
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x` for non-decreasing
/// `xs`. Left of the data: `ys[0]`; right of it: `right`.
pub fn interp(x: f64, xs: &[f64], ys: &[f64], right: f64) -> f64 {
    let n = xs.len();
    if x > xs[n - 1] {
        return right;
    }
    if x < xs[0] {
        return ys[0];
    }
    if x == xs[n - 1] {
        return ys[n - 1];
    }
    // Last j with xs[j] <= x, so xs[j] <= x < xs[j + 1].
    let j = xs.partition_point(|&v| v <= x) - 1;
    let slope = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
    slope * (x - xs[j]) + ys[j]
}

/// AP of a ranked detection list against `n_gt` ground truths.
pub fn average_precision(ranked: &[RankedDetection], n_gt: usize, mode: ApMode) -> f64 {
    if n_gt == 0 || ranked.is_empty() {
        return 0.0;
    }
    let curve = pr_curve(ranked, n_gt);
    match mode {
        ApMode::Nuscenes => {
            const MIN_RECALL: f64 = 0.1;
            const MIN_PRECISION: f64 = 0.1;
            let (rec, prec): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
            let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
            let first = (100.0 * MIN_RECALL).round() as usize + 1;
            let kept: Vec<f64> =
                grid[first..].iter().map(|&r| (interp(r, &rec, &prec, 0.0) - MIN_PRECISION).max(0.0)).collect();
            // Summation error can push a perfect curve a few ulps above 1.
            (kept.iter().sum::<f64>() / kept.len() as f64 / (1.0 - MIN_PRECISION)).min(1.0)
        }
        ApMode::Trapezoid => {
            let (mut area, mut prev_r, mut prev_p) = (0.0, 0.0, curve[0].1);
            for (r, p) in curve {
                area += (r - prev_r) * (p + prev_p) / 2.0;
                prev_r = r;
                prev_p = p;
            }
            area.min(1.0)
        }
    }
}

/// Arithmetic mean of every entry of a class x threshold AP table.
pub fn mean_ap(table: &BTreeMap<String, BTreeMap<String, f64>>) -> f64 {
    let values: Vec<f64> = table.values().flat_map(|row| row.values().copied()).collect();
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// `(3 mAP + sum over the three errors of (1 - min(1, e))) / 6`.
pub fn fds(map: f64, mate: f64, mase: f64, maoe: f64) -> f64 {
    let tp: f64 = [mate, mase, maoe].iter().map(|e| 1.0 - e.min(1.0)).sum();
    (3.0 * map + tp) / 6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTpErrors {
    pub ate: f64,
    pub ase: f64,
    pub aoe: f64,
    pub matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpSummary {
    pub mate: f64,
    pub mase: f64,
    pub maoe: f64,
    /// Set when no class had a match and the errors are the 1.0 clamp.
    pub undefined: bool,
    pub per_class: BTreeMap<String, ClassTpErrors>,
}

/// Class means of the per-pair errors, then the mean over classes with at
/// least one match.
pub fn tp_errors(per_class_pairs: &BTreeMap<String, Vec<PairErrors>>) -> TpSummary {
    let mut per_class = BTreeMap::new();
    for (class, pairs) in per_class_pairs {
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len() as f64;
        per_class.insert(
            class.clone(),
            ClassTpErrors {
                ate: pairs.iter().map(|p| p.ate).sum::<f64>() / n,
                ase: pairs.iter().map(|p| p.ase).sum::<f64>() / n,
                aoe: pairs.iter().map(|p| p.aoe).sum::<f64>() / n,
                matches: pairs.len(),
            },
        );
    }
    if per_class.is_empty() {
        return TpSummary { mate: 1.0, mase: 1.0, maoe: 1.0, undefined: true, per_class };
    }
    let n = per_class.len() as f64;
    TpSummary {
        mate: per_class.values().map(|c| c.ate).sum::<f64>() / n,
        mase: per_class.values().map(|c| c.ase).sum::<f64>() / n,
        maoe: per_class.values().map(|c| c.aoe).sum::<f64>() / n,
        undefined: false,
        per_class,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub frames: usize,
    pub gt_boxes: BTreeMap<String, usize>,
    pub pred_boxes: BTreeMap<String, usize>,
    pub unknown_class_predictions: usize,
    pub unknown_class_gts: usize,
    pub out_of_range_gts: usize,
    pub out_of_range_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub max_range: Option<f64>,
    /// `ap[class][threshold]`; classes with neither gts nor predictions are
    /// left out.
    pub ap: BTreeMap<String, BTreeMap<String, f64>>,
    pub map: f64,
    pub mate: f64,
    pub mase: f64,
    pub maoe: f64,
    pub fds: f64,
    pub tp: TpSummary,
    pub counts: SampleCounts,
    /// Keyed by `"0-R"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub distance_bins: BTreeMap<String, MetricsReport>,
}

impl MetricsReport {
    /// Range and recomposition checks on an emitted report.
    pub fn validate(&self) -> Result<(), EvalError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(EvalError::InvalidReport(format!("{name} = {v} outside [0, 1]")))
            }
        };
        for (c, row) in &self.ap {
            for (t, v) in row {
                unit(&format!("ap[{c}][{t}]"), *v)?;
            }
        }
        unit("map", self.map)?;
        unit("fds", self.fds)?;
        for (n, v) in [("mate", self.mate), ("mase", self.mase), ("maoe", self.maoe)] {
            if !(v >= 0.0) {
                return Err(EvalError::InvalidReport(format!("{n} = {v} negative")));
            }
        }
        let recomposed = fds(self.map, self.mate, self.mase, self.maoe);
        if (recomposed - self.fds).abs() > 1e-9 {
            return Err(EvalError::InvalidReport(format!("fds {} != recomposed {recomposed}", self.fds)));
        }
        self.distance_bins.values().try_for_each(|r| r.validate())
    }

    /// One row per evaluated class: AP per threshold then the TP errors.
    pub fn write_class_csv<W: Write>(&self, mut w: W, thresholds: &[f64]) -> Result<(), EvalError> {
        let keys: Vec<String> = thresholds.iter().map(|t| threshold_key(*t)).collect();
        write!(w, "class")?;
        for k in &keys {
            write!(w, ",ap@{k}")?;
        }
        writeln!(w, ",ate,ase,aoe,matches")?;
        for (class, row) in &self.ap {
            write!(w, "{class}")?;
            for k in &keys {
                write!(w, ",{}", row.get(k).copied().unwrap_or(0.0))?;
            }
            match self.tp.per_class.get(class) {
                Some(e) => writeln!(w, ",{},{},{},{}", e.ate, e.ase, e.aoe, e.matches)?,
                None => writeln!(w, ",,,,0")?,
            }
        }
        Ok(())
    }
}

/// Report key of a threshold: `0.5`, `1`, `2`, `4`.
pub fn threshold_key(t: f64) -> String {
    format!("{t}")
}

/// Ground-plane distance of a box center from the ego origin.
pub fn box_range(b: &Box3D) -> f64 {
    b.center[0].hypot(b.center[1])
}

/// Full pipeline: range filtering, per-frame matching for every class and
/// threshold, cross-frame ranking, AP, TP errors and FDS, plus cumulative
/// distance-bin sub-reports.
pub fn evaluate(gts: &[FrameBoxes], preds: &[FrameBoxes], config: &EvalConfig) -> Result<MetricsReport, EvalError> {
    config.validate()?;
    let mut position = HashMap::new();
    for (i, f) in gts.iter().enumerate() {
        if position.insert(f.frame_id.as_str(), i).is_some() {
            return Err(EvalError::DuplicateFrame(f.frame_id.clone()));
        }
    }
    // Predictions re-indexed by gt frame position; missing frames are empty.
    let mut aligned: Vec<Vec<Box3D>> = vec![Vec::new(); gts.len()];
    let mut seen = vec![false; gts.len()];
    for f in preds {
        let &i = position.get(f.frame_id.as_str()).ok_or_else(|| EvalError::UnknownFrame(f.frame_id.clone()))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(EvalError::DuplicateFrame(f.frame_id.clone()));
        }
        if let Some(index) = f.boxes.iter().position(|b| b.score.is_none()) {
            return Err(EvalError::MissingScore { frame: f.frame_id.clone(), index });
        }
        aligned[i] = f.boxes.clone();
    }
    let gt_boxes: Vec<Vec<Box3D>> = gts.iter().map(|f| f.boxes.clone()).collect();
    let mut report = evaluate_aligned(&gt_boxes, &aligned, config, config.max_range);
    for &r in &config.distance_bins {
        let limit = config.max_range.map_or(r, |m| m.min(r));
        report.distance_bins.insert(format!("0-{r}"), evaluate_aligned(&gt_boxes, &aligned, config, Some(limit)));
    }
    Ok(report)
}

fn evaluate_aligned(gts: &[Vec<Box3D>], preds: &[Vec<Box3D>], config: &EvalConfig, max_range: Option<f64>) -> MetricsReport {
    let mut counts = SampleCounts { frames: gts.len(), ..Default::default() };
    let in_range = |b: &Box3D| max_range.is_none_or(|r| box_range(b) <= r);
    let known = |b: &Box3D| config.classes.iter().any(|c| *c == b.class);
    let keep = |frames: &[Vec<Box3D>], unknown: &mut usize, far: &mut usize| -> Vec<Vec<Box3D>> {
        frames
            .iter()
            .map(|boxes| {
                boxes
                    .iter()
                    .filter(|b| {
                        if !known(b) {
                            *unknown += 1;
                            false
                        } else if !in_range(b) {
                            *far += 1;
                            false
                        } else {
                            true
                        }
                    })
                    .cloned()
                    .collect()
            })
            .collect()
    };
    let (mut ug, mut fg, mut up, mut fp) = (0, 0, 0, 0);
    let gts = keep(gts, &mut ug, &mut fg);
    let preds = keep(preds, &mut up, &mut fp);
    counts.unknown_class_gts = ug;
    counts.out_of_range_gts = fg;
    counts.unknown_class_predictions = up;
    counts.out_of_range_predictions = fp;

    let mut ap = BTreeMap::new();
    let mut tp_pairs = BTreeMap::new();
    for class in &config.classes {
        let n_gt: usize = gts.iter().map(|f| f.iter().filter(|b| b.class == *class).count()).sum();
        let n_pred: usize = preds.iter().map(|f| f.iter().filter(|b| b.class == *class).count()).sum();
        counts.gt_boxes.insert(class.clone(), n_gt);
        counts.pred_boxes.insert(class.clone(), n_pred);
        if n_gt == 0 && n_pred == 0 {
            continue;
        }
        let mut row = BTreeMap::new();
        for &t in &config.thresholds {
            let mut ranked: Vec<RankedDetection> = gts
                .par_iter()
                .zip(preds.par_iter())
                .enumerate()
                .flat_map_iter(|(frame, (g, p))| {
                    match_greedy(g, p, class, t).pred_match.into_iter().map(move |(index, m)| RankedDetection {
                        score: score_of(&p[index]),
                        frame,
                        index,
                        true_positive: m.is_some(),
                    })
                })
                .collect();
            rank_detections(&mut ranked);
            row.insert(threshold_key(t), average_precision(&ranked, n_gt, config.ap_mode));
        }
        ap.insert(class.clone(), row);

        let pairs: Vec<PairErrors> = gts
            .par_iter()
            .zip(preds.par_iter())
            .flat_map_iter(|(g, p)| {
                match_greedy(g, p, class, config.tp_threshold).pairs.into_iter().map(|(gi, pi)| pair_errors(&g[gi], &p[pi]))
            })
            .collect();
        tp_pairs.insert(class.clone(), pairs);
    }
    let map = mean_ap(&ap);
    let tp = tp_errors(&tp_pairs);
    MetricsReport {
        max_range,
        map,
        mate: tp.mate,
        mase: tp.mase,
        maoe: tp.maoe,
        fds: fds(map, tp.mate, tp.mase, tp.maoe),
        ap,
        tp,
        counts,
        distance_bins: BTreeMap::new(),
    }
}
