//! Detection evaluation by re-matching at every score threshold.
//!
//! Matching: within one image and class, detections are visited by descending
//! score (ties in input order); each takes the unmatched ground truth of
//! highest IoU (first on ties) and is a true positive when that IoU reaches
//! the threshold.

use crate::boxes::iou;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det {
    pub image: usize,
    pub class: usize,
    pub score: f64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gt {
    pub image: usize,
    pub class: usize,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// `None` for classes without ground truth.
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn greedy_tp(dets: &[Det], gts: &[Gt], iou_threshold: f64) -> usize {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable, so equal scores keep input order
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for d in order {
        let mut best: Option<usize> = None;
        for g in 0..gts.len() {
            if used[g] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => iou(&dets[d].bbox, &gts[g].bbox) > iou(&dets[d].bbox, &gts[b].bbox),
            };
            if better {
                best = Some(g);
            }
        }
        if let Some(g) = best {
            if iou(&dets[d].bbox, &gts[g].bbox) >= iou_threshold {
                used[g] = true;
                tp += 1;
            }
        }
    }
    tp
}

/// `(tp, fp)` for one class over all images, keeping detections scoring at least `min_score`.
pub fn counts_at(dets: &[Det], gts: &[Gt], class: usize, min_score: f64, iou_threshold: f64) -> (usize, usize) {
    let mut images: Vec<usize> = dets.iter().map(|d| d.image).chain(gts.iter().map(|g| g.image)).collect();
    images.sort_unstable();
    images.dedup();
    let (mut tp, mut fp) = (0, 0);
    for img in images {
        let d: Vec<Det> = dets
            .iter()
            .filter(|d| d.image == img && d.class == class && d.score >= min_score)
            .copied()
            .collect();
        let g: Vec<Gt> = gts.iter().filter(|g| g.image == img && g.class == class).copied().collect();
        let t = greedy_tp(&d, &g, iou_threshold);
        tp += t;
        fp += d.len() - t;
    }
    (tp, fp)
}

/// `(recall, precision)` at each distinct score of the class, highest first.
pub fn operating_points(dets: &[Det], gts: &[Gt], class: usize, iou_threshold: f64) -> Vec<(f64, f64)> {
    let n_gt = gts.iter().filter(|g| g.class == class).count();
    let mut scores: Vec<f64> = dets.iter().filter(|d| d.class == class).map(|d| d.score).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
    scores.dedup();
    scores
        .into_iter()
        .map(|t| {
            let (tp, fp) = counts_at(dets, gts, class, t, iou_threshold);
            let r = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            (r, p)
        })
        .collect()
}

/// Σ over distinct recall levels r_k of (r_k − r_{k−1})·max{P : R ≥ r_k}, r_0 = 0.
pub fn ap_all_points(points: &[(f64, f64)]) -> f64 {
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();
    let mut prev = 0.0;
    let mut ap = 0.0;
    for r in recalls {
        if r == prev {
            continue;
        }
        let p = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

/// Mean over t = 0, 0.1, …, 1 of max{P : R ≥ t}.
pub fn ap_eleven_point(points: &[(f64, f64)]) -> f64 {
    (0..=10)
        .map(|k| {
            let t = k as f64 / 10.0;
            points.iter().filter(|q| q.0 >= t).map(|q| q.1).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

pub fn evaluate(dets: &[Det], gts: &[Gt], num_classes: usize, iou_threshold: f64, score_threshold: f64) -> Summary {
    let mut per_class_ap = vec![None; num_classes];
    let (mut tp, mut fp, mut total_gt) = (0, 0, 0);
    for (c, slot) in per_class_ap.iter_mut().enumerate() {
        let n_gt = gts.iter().filter(|g| g.class == c).count();
        let (t, f) = counts_at(dets, gts, c, score_threshold, iou_threshold);
        tp += t;
        fp += f;
        total_gt += n_gt;
        if n_gt > 0 {
            *slot = Some(ap_all_points(&operating_points(dets, gts, c, iou_threshold)));
        }
    }
    let aps: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Summary {
        per_class_ap,
        map,
        tp,
        fp,
        fn_: total_gt - tp,
    }
}
