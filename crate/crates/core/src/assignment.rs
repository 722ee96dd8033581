//! Anchor-grid positive-sample assignment.
//!
//! Counts how many anchors each ground-truth box would receive as positives
//! under a similarity metric and threshold. Used to compare how IoU-style and
//! Wasserstein-style measures treat tiny objects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::AssignError;
use crate::geometry::{BBox, GroundTruth};
use crate::metrics::{MetricKind, MetricParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorGrid {
    pub strides: Vec<u32>,
    /// Anchor `(w, h)` shapes, one list per stride.
    pub anchor_sizes: Vec<Vec<(f64, f64)>>,
    pub image_w: u32,
    pub image_h: u32,
}

impl AnchorGrid {
    /// Square anchors with side equal to the stride, one per location.
    pub fn stride_sized(image_w: u32, image_h: u32, strides: &[u32]) -> Self {
        Self {
            strides: strides.to_vec(),
            anchor_sizes: strides.iter().map(|&s| vec![(s as f64, s as f64)]).collect(),
            image_w,
            image_h,
        }
    }

    /// 640x640 with strides 8, 16 and 32 and stride-sized square anchors.
    pub fn default_detector() -> Self {
        Self::stride_sized(640, 640, &[8, 16, 32])
    }

    pub fn validate(&self) -> Result<(), AssignError> {
        if self.strides.is_empty() {
            return Err(AssignError::InvalidGrid("no strides".into()));
        }
        if self.strides.len() != self.anchor_sizes.len() {
            return Err(AssignError::InvalidGrid(format!(
                "{} strides but {} anchor size lists",
                self.strides.len(),
                self.anchor_sizes.len()
            )));
        }
        for (&s, sizes) in self.strides.iter().zip(&self.anchor_sizes) {
            if s == 0 {
                return Err(AssignError::InvalidGrid("zero stride".into()));
            }
            if s > self.image_w || s > self.image_h {
                return Err(AssignError::InvalidGrid(format!(
                    "stride {s} larger than image {}x{}",
                    self.image_w, self.image_h
                )));
            }
            if sizes.is_empty() {
                return Err(AssignError::InvalidGrid(format!("no anchor sizes for stride {s}")));
            }
            for &(w, h) in sizes {
                if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                    return Err(AssignError::InvalidGrid(format!("bad anchor size {w}x{h}")));
                }
            }
        }
        Ok(())
    }

    fn levels(&self) -> impl Iterator<Item = Level<'_>> + '_ {
        let mut offset = 0;
        self.strides.iter().zip(&self.anchor_sizes).map(move |(&s, sizes)| {
            let cols = (self.image_w / s) as usize;
            let rows = (self.image_h / s) as usize;
            let lvl = Level {
                stride: s as f64,
                cols,
                rows,
                sizes,
                offset,
            };
            offset += cols * rows * sizes.len();
            lvl
        })
    }

    pub fn anchor_count(&self) -> usize {
        self.levels().map(|l| l.cols * l.rows * l.sizes.len()).sum()
    }
}

struct Level<'a> {
    stride: f64,
    cols: usize,
    rows: usize,
    sizes: &'a [(f64, f64)],
    offset: usize,
}

impl Level<'_> {
    fn index(&self, row: usize, col: usize, k: usize) -> usize {
        self.offset + (row * self.cols + col) * self.sizes.len() + k
    }

    fn anchor(&self, row: usize, col: usize, k: usize) -> BBox {
        let (w, h) = self.sizes[k];
        BBox::new((col as f64 + 0.5) * self.stride, (row as f64 + 0.5) * self.stride, w, h)
            .expect("validated anchor size")
    }

    /// Inclusive index range of cells whose center lies within `[lo, hi]`.
    fn cell_range(&self, lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
        // center of cell i is (i + 0.5) * stride
        let first = ((lo / self.stride) - 0.5).ceil().max(0.0);
        let last = ((hi / self.stride) - 0.5).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    }
}

/// Enumerates anchors level by level, rows then columns then shapes.
pub fn generate_anchors(grid: &AnchorGrid) -> Result<Vec<BBox>, AssignError> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.anchor_count());
    for lvl in grid.levels() {
        for row in 0..lvl.rows {
            for col in 0..lvl.cols {
                for k in 0..lvl.sizes.len() {
                    out.push(lvl.anchor(row, col, k));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub per_gt_positive_counts: Vec<usize>,
    pub mean_positives: f64,
    pub metric: MetricKind,
    pub threshold: f64,
}

impl AssignmentReport {
    fn from_counts(counts: Vec<usize>, metric: MetricKind, threshold: f64) -> Self {
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        Self {
            per_gt_positive_counts: counts,
            mean_positives: mean,
            metric,
            threshold,
        }
    }
}

/// Candidate anchors for one ground truth whose metric value reaches the
/// threshold, as `(anchor index, value)`.
///
/// Only anchors that can possibly reach a positive threshold are scored: for
/// the IoU family that means overlapping anchors (every variant is bounded
/// above by IoU), for NWD anchors whose center distance is within
/// `-C ln(threshold)`.
fn candidates(
    gt: &BBox,
    grid: &AnchorGrid,
    metric: MetricKind,
    threshold: f64,
    params: &MetricParams,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for lvl in grid.levels() {
        let (reach_x, reach_y) = if metric.uses_overlap() {
            let max_w = lvl.sizes.iter().map(|s| s.0).fold(0.0, f64::max);
            let max_h = lvl.sizes.iter().map(|s| s.1).fold(0.0, f64::max);
            ((gt.w() + max_w) / 2.0, (gt.h() + max_h) / 2.0)
        } else {
            let r = -params.nwd.c() * threshold.ln();
            (r, r)
        };
        // slack for rounding at the boundary
        let (reach_x, reach_y) = {
            let pad = |r: f64| r * (1.0 + 1e-9) + 1e-9;
            (pad(reach_x), pad(reach_y))
        };
        let Some((c0, c1)) = lvl.cell_range(gt.cx() - reach_x, gt.cx() + reach_x, lvl.cols) else {
            continue;
        };
        let Some((r0, r1)) = lvl.cell_range(gt.cy() - reach_y, gt.cy() + reach_y, lvl.rows) else {
            continue;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                for k in 0..lvl.sizes.len() {
                    let a = lvl.anchor(row, col, k);
                    let v = metric.evaluate(&a, gt, params);
                    if v >= threshold {
                        out.push((lvl.index(row, col, k), v));
                    }
                }
            }
        }
    }
    out
}

/// Anchor `a` is positive for ground truth `g` iff `metric(a, g) >= threshold`.
/// An anchor that qualifies for several ground truths goes to the one with the
/// highest value, ties to the lowest ground-truth index.
pub fn assign(
    gts: &[GroundTruth],
    grid: &AnchorGrid,
    metric: MetricKind,
    threshold: f64,
    params: &MetricParams,
) -> Result<AssignmentReport, AssignError> {
    validate_inputs(gts, grid, metric, threshold)?;
    let per_gt: Vec<Vec<(usize, f64)>> = gts
        .par_iter()
        .map(|gt| candidates(&gt.bbox, grid, metric, threshold, params))
        .collect();

    // anchor -> (gt index, value), resolved in gt order
    let mut owner: std::collections::HashMap<usize, (usize, f64)> = std::collections::HashMap::new();
    for (gi, cands) in per_gt.iter().enumerate() {
        for &(ai, v) in cands {
            owner
                .entry(ai)
                .and_modify(|cur| {
                    if v > cur.1 {
                        *cur = (gi, v);
                    }
                })
                .or_insert((gi, v));
        }
    }
    let mut counts = vec![0usize; gts.len()];
    for (gi, _) in owner.values() {
        counts[*gi] += 1;
    }
    Ok(AssignmentReport::from_counts(counts, metric, threshold))
}

/// Reference implementation scoring every anchor against every ground truth.
pub fn assign_exhaustive(
    gts: &[GroundTruth],
    grid: &AnchorGrid,
    metric: MetricKind,
    threshold: f64,
    params: &MetricParams,
) -> Result<AssignmentReport, AssignError> {
    validate_inputs(gts, grid, metric, threshold)?;
    let anchors = generate_anchors(grid)?;
    let mut counts = vec![0usize; gts.len()];
    for a in &anchors {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            let v = metric.evaluate(a, &gt.bbox, params);
            if v >= threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            counts[gi] += 1;
        }
    }
    Ok(AssignmentReport::from_counts(counts, metric, threshold))
}

fn validate_inputs(gts: &[GroundTruth], grid: &AnchorGrid, metric: MetricKind, threshold: f64) -> Result<(), AssignError> {
    if gts.is_empty() {
        return Err(AssignError::EmptyGroundTruth);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AssignError::InvalidThreshold(threshold));
    }
    if !metric.is_similarity() {
        return Err(crate::error::MetricError::NotASimilarity(metric).into());
    }
    grid.validate()
}

/// `n` square ground-truth boxes of side `size`, placed uniformly inside the image.
pub fn random_square_gts(n: usize, size: f64, image_w: u32, image_h: u32, seed: u64) -> Result<Vec<GroundTruth>, AssignError> {
    if !(size > 0.0) || size > image_w as f64 || size > image_h as f64 {
        return Err(AssignError::InvalidGrid(format!(
            "box size {size} does not fit image {image_w}x{image_h}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = size / 2.0;
    (0..n)
        .map(|_| {
            let cx = rng.gen_range(half..=image_w as f64 - half);
            let cy = rng.gen_range(half..=image_h as f64 - half);
            Ok(GroundTruth {
                bbox: BBox::new(cx, cy, size, size)?,
                class_id: 0,
            })
        })
        .collect()
}
