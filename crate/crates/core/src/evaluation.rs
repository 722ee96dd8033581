//! Detection evaluation: matching, precision/recall, AP and mAP@0.5.
//!
//! Matching is greedy in descending score order (ties by input order). A
//! detection is a true positive when the unmatched ground truth of its class
//! with the highest IoU reaches the IoU threshold. AP is the area under the
//! precision envelope (all-point integration) with an 11-point alternative.
//! Ratios with a zero denominator are defined as 0.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::geometry::{Detection, GroundTruth};
use crate::io::ClassTable;
use crate::metrics::iou;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    #[default]
    AllPoints,
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    iou_threshold: f64,
    score_threshold: f64,
    pub ap_mode: ApMode,
}

impl MatchConfig {
    pub const DEFAULT_IOU: f64 = 0.5;

    pub fn new(iou_threshold: f64, score_threshold: f64, ap_mode: ApMode) -> Result<Self, EvalError> {
        for (name, value) in [("iou_threshold", iou_threshold), ("score_threshold", score_threshold)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EvalError::InvalidThreshold { name, value });
            }
        }
        Ok(Self { iou_threshold, score_threshold, ap_mode })
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }

    pub fn score_threshold(&self) -> f64 {
        self.score_threshold
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: Self::DEFAULT_IOU,
            score_threshold: 0.0,
            ap_mode: ApMode::AllPoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Parallel to the input detections.
    pub det_tp: Vec<bool>,
    /// Parallel to the input ground truths.
    pub gt_matched: Vec<bool>,
}

/// Indices of `dets` in descending score order, ties by input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score().total_cmp(&dets[a].score()));
    order
}

/// Matches detections to ground truths of one image and one class.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], cfg: &MatchConfig) -> MatchResult {
    let mut det_tp = vec![false; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for di in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let v = iou(&dets[di].bbox, &gt.bbox);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            if v >= cfg.iou_threshold {
                det_tp[di] = true;
                gt_matched[gi] = true;
            }
        }
    }
    MatchResult { det_tp, gt_matched }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(TP / (TP + FP), TP / (TP + FN))`, each 0 when its denominator is 0.
pub fn precision_recall(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub class_id: usize,
    /// `(recall, precision)` after each distinct score threshold, highest first.
    pub points: Vec<(f64, f64)>,
}

impl PrCurve {
    /// Builds the curve from `(score, is_tp)` pairs pooled over images.
    /// Detections sharing a score form one operating point.
    pub fn from_scored(class_id: usize, scored: &[(f64, bool)], num_gts: usize) -> Self {
        let mut sorted: Vec<(f64, bool)> = scored.to_vec();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        for (i, &(score, is_tp)) in sorted.iter().enumerate() {
            if is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_tie = sorted.get(i + 1).is_none_or(|next| next.0 != score);
            if last_of_tie {
                let (p, r) = precision_recall(tp, fp, num_gts - tp);
                points.push((r, p));
            }
        }
        Self { class_id, points }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["recall", "precision"])?;
        for &(r, p) in &self.points {
            wr.write_record([crate::io::fmt_sig(r), crate::io::fmt_sig(p)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Area under the monotone precision envelope.
pub fn average_precision(curve: &PrCurve, mode: ApMode) -> f64 {
    match mode {
        ApMode::AllPoints => {
            // envelope: precision at recall r is the max precision at any recall >= r
            let mut rec = Vec::with_capacity(curve.points.len() + 2);
            let mut prec = Vec::with_capacity(curve.points.len() + 2);
            rec.push(0.0);
            prec.push(0.0);
            for &(r, p) in &curve.points {
                rec.push(r);
                prec.push(p);
            }
            for i in (0..prec.len() - 1).rev() {
                prec[i] = prec[i].max(prec[i + 1]);
            }
            let mut ap = 0.0;
            for i in 1..rec.len() {
                if rec[i] != rec[i - 1] {
                    ap += (rec[i] - rec[i - 1]) * prec[i];
                }
            }
            ap
        }
        ApMode::ElevenPoint => {
            let mut ap = 0.0;
            for k in 0..=10 {
                let t = k as f64 / 10.0;
                let p = curve
                    .points
                    .iter()
                    .filter(|(r, _)| *r >= t)
                    .map(|&(_, p)| p)
                    .fold(0.0, f64::max);
                ap += p / 11.0;
            }
            ap
        }
    }
}

/// A detection tagged with the image it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageDetection {
    pub image_id: String,
    pub det: Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageGroundTruth {
    pub image_id: String,
    pub gt: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Only classes with at least one ground truth.
    pub per_class_ap: BTreeMap<usize, f64>,
    pub map50: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    /// One curve per class with ground truth, ascending class id.
    pub curves: Vec<PrCurve>,
}

/// Pools detections over all images, per class. mAP is the mean AP over
/// classes that have ground truth (0 when there are none). The summary
/// precision and recall count only detections scoring at least
/// `cfg.score_threshold`.
pub fn evaluate(
    dets: &[ImageDetection],
    gts: &[ImageGroundTruth],
    class_table: &ClassTable,
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    let num_classes = class_table.len();
    for cid in dets.iter().map(|d| d.det.class_id).chain(gts.iter().map(|g| g.gt.class_id)) {
        if cid >= num_classes {
            return Err(EvalError::UnknownClass { class_id: cid, classes: num_classes });
        }
    }

    // (image, class) -> indices into the inputs; BTreeMap keeps the walk deterministic
    let mut groups: BTreeMap<(&str, usize), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry((d.image_id.as_str(), d.det.class_id)).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        groups.entry((g.image_id.as_str(), g.gt.class_id)).or_default().1.push(i);
    }

    let mut scored: HashMap<usize, Vec<(f64, bool)>> = HashMap::new();
    let mut gt_count: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for ((_, class_id), (di, gi)) in &groups {
        let group_dets: Vec<Detection> = di.iter().map(|&i| dets[i].det).collect();
        let group_gts: Vec<GroundTruth> = gi.iter().map(|&i| gts[i].gt).collect();
        *gt_count.entry(*class_id).or_default() += group_gts.len();
        let m = match_detections(&group_dets, &group_gts, cfg);
        let entry = scored.entry(*class_id).or_default();
        for (d, &is_tp) in group_dets.iter().zip(&m.det_tp) {
            entry.push((d.score(), is_tp));
        }
        // matching is greedy by score, so thresholding afterwards equals matching the survivors
        for (d, &is_tp) in group_dets.iter().zip(&m.det_tp) {
            if d.score() >= cfg.score_threshold {
                if is_tp {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
    }

    let total_gts: usize = gt_count.values().sum();
    let fn_ = total_gts - tp;
    let mut per_class_ap = BTreeMap::new();
    let mut curves = Vec::new();
    for (&class_id, &n) in gt_count.iter().filter(|(_, &n)| n > 0) {
        let curve = PrCurve::from_scored(class_id, scored.get(&class_id).map(Vec::as_slice).unwrap_or(&[]), n);
        per_class_ap.insert(class_id, average_precision(&curve, cfg.ap_mode));
        curves.push(curve);
    }
    let map50 = if per_class_ap.is_empty() {
        0.0
    } else {
        per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64
    };
    let (precision, recall) = precision_recall(tp, fp, fn_);
    Ok(EvalReport {
        summary: EvalSummary {
            per_class_ap,
            map50,
            precision,
            recall,
            tp,
            fp,
            fn_,
        },
        curves,
    })
}
