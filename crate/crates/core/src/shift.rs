//! Distribution-shift auditing and offset-sensitivity sweeps.
//!
//! Shift between two image sets is measured as the Jensen-Shannon divergence
//! (natural log, so bounded by ln 2) of their pooled 256-bin intensity
//! histograms. Sweeps slide a predicted box along the diagonal of a
//! ground-truth box and record metric values against the center offset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ShiftError;
use crate::geometry::BBox;
use crate::metrics::{MetricKind, MetricParams};

pub const DEFAULT_BINS: usize = 256;

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ShiftError> {
        if pixels.len() != width as usize * height as usize {
            return Err(ShiftError::InvalidHistogram(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    /// Reads PGM or PNG; color input is converted to luma.
    pub fn open(path: &Path) -> Result<Self, ShiftError> {
        let img = image::open(path).map_err(|source| ShiftError::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let luma = img.into_luma8();
        let (width, height) = luma.dimensions();
        Ok(Self {
            width,
            height,
            pixels: luma.into_raw(),
        })
    }
}

/// Raw per-bin counts. Merging is associative, so accumulation can be sharded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramCounts(pub Vec<u64>);

impl HistogramCounts {
    pub fn zeros(bins: usize) -> Self {
        Self(vec![0; bins])
    }

    pub fn add_image(&mut self, img: &GrayImage) {
        let bins = self.0.len();
        for &px in &img.pixels {
            self.0[px as usize * bins / 256] += 1;
        }
    }

    pub fn merge(mut self, other: &HistogramCounts) -> Result<Self, ShiftError> {
        if self.0.len() != other.0.len() {
            return Err(ShiftError::BinMismatch(self.0.len(), other.0.len()));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
        Ok(self)
    }

    pub fn normalize(&self) -> Result<Histogram, ShiftError> {
        let total: u64 = self.0.iter().sum();
        if total == 0 {
            return Err(ShiftError::EmptyHistogram);
        }
        Ok(Histogram {
            probs: self.0.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }
}

/// Normalized discrete distribution over intensity bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    probs: Vec<f64>,
}

impl Histogram {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self, ShiftError> {
        if probs.is_empty() {
            return Err(ShiftError::EmptyHistogram);
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(ShiftError::InvalidHistogram(format!("probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(ShiftError::InvalidHistogram(format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative counts (or weights).
    pub fn from_counts(counts: &[f64]) -> Result<Self, ShiftError> {
        if let Some(c) = counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(ShiftError::InvalidHistogram(format!("count {c}")));
        }
        let total: f64 = counts.iter().sum();
        if counts.is_empty() || total <= 0.0 {
            return Err(ShiftError::EmptyHistogram);
        }
        Ok(Self {
            probs: counts.iter().map(|c| c / total).collect(),
        })
    }

    pub fn bin_count(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// 256-bin intensity histogram pooled over every pixel of every image.
pub fn intensity_histogram(images: &[GrayImage]) -> Result<Histogram, ShiftError> {
    if images.is_empty() {
        return Err(ShiftError::NoImages);
    }
    let mut counts = HistogramCounts::zeros(DEFAULT_BINS);
    for img in images {
        counts.add_image(img);
    }
    counts.normalize()
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).ln()
    }
}

/// `½ KL(p‖m) + ½ KL(q‖m)` with `m = (p + q)/2`, natural log.
pub fn js_divergence(p: &Histogram, q: &Histogram) -> Result<f64, ShiftError> {
    if p.bin_count() != q.bin_count() {
        return Err(ShiftError::BinMismatch(p.bin_count(), q.bin_count()));
    }
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        let m = 0.5 * (a + b);
        kl_p += kl_term(a, m);
        kl_q += kl_term(b, m);
    }
    // rounding can push the sum a hair outside [0, ln 2]
    Ok((0.5 * (kl_p + kl_q)).clamp(0.0, std::f64::consts::LN_2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Ground-truth side lengths in pixels.
    pub box_sizes: Vec<f64>,
    pub max_offset: f64,
    pub step: f64,
    /// Predicted side as a fraction of the ground-truth side.
    pub pred_scale: f64,
    pub metrics: Vec<MetricKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            box_sizes: vec![4.0, 8.0, 16.0, 32.0],
            max_offset: 16.0,
            step: 0.5,
            pred_scale: 1.0,
            metrics: vec![MetricKind::IoU, MetricKind::CIoU, MetricKind::Nwd],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ShiftError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ShiftError::InvalidSweep(format!("step {}", self.step)));
        }
        if !(self.pred_scale > 0.0 && self.pred_scale.is_finite()) {
            return Err(ShiftError::InvalidSweep(format!("pred_scale {}", self.pred_scale)));
        }
        if !(self.max_offset >= 0.0 && self.max_offset.is_finite()) {
            return Err(ShiftError::InvalidSweep(format!("max_offset {}", self.max_offset)));
        }
        if let Some(s) = self.box_sizes.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(ShiftError::InvalidSweep(format!("box size {s}")));
        }
        Ok(())
    }

    /// `0, step, 2·step, …` up to `max_offset` (inclusive within rounding).
    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.max_offset / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub metric: MetricKind,
    pub box_size: f64,
    /// `(center offset in pixels, metric value)`, strictly increasing offsets.
    pub samples: Vec<(f64, f64)>,
}

/// Ground truth `(0, 0, s, s)` against prediction
/// `(d/√2, d/√2, k·s, k·s)` for every offset `d`. One curve per
/// `(metric, size)`, metrics outermost.
pub fn sweep(cfg: &SweepConfig, params: &MetricParams) -> Result<Vec<SweepCurve>, ShiftError> {
    cfg.validate()?;
    let offsets = cfg.offsets();
    let mut curves = Vec::with_capacity(cfg.metrics.len() * cfg.box_sizes.len());
    for &metric in &cfg.metrics {
        for &s in &cfg.box_sizes {
            let g = BBox::new(0.0, 0.0, s, s)?;
            let side = cfg.pred_scale * s;
            let samples = offsets
                .iter()
                .map(|&d| {
                    let a = d / std::f64::consts::SQRT_2;
                    let p = BBox::new(a, a, side, side)?;
                    Ok((d, metric.evaluate(&p, &g, params)))
                })
                .collect::<Result<Vec<_>, ShiftError>>()?;
            curves.push(SweepCurve {
                metric,
                box_size: s,
                samples,
            });
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessRow {
    pub metric: MetricKind,
    pub box_size: f64,
    /// Largest `|Δvalue / Δoffset|` between consecutive samples.
    pub max_abs_slope: f64,
}

pub fn smoothness_report(curves: &[SweepCurve]) -> Result<Vec<SmoothnessRow>, ShiftError> {
    curves
        .iter()
        .map(|c| {
            if c.samples.len() < 2 {
                return Err(ShiftError::ShortCurve {
                    metric: c.metric,
                    box_size: c.box_size,
                    samples: c.samples.len(),
                });
            }
            let max_abs_slope = c
                .samples
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max);
            Ok(SmoothnessRow {
                metric: c.metric,
                box_size: c.box_size,
                max_abs_slope,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_zero_image() {
        let h = intensity_histogram(&[GrayImage::filled(4, 3, 0)]).unwrap();
        assert_eq!(h.probs()[0], 1.0);
        assert_eq!(h.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_flat_images() {
        let h = intensity_histogram(&[GrayImage::filled(5, 5, 10), GrayImage::filled(5, 5, 200)]).unwrap();
        assert_eq!(h.probs()[10], 0.5);
        assert_eq!(h.probs()[200], 0.5);
        assert_eq!(h.probs().iter().filter(|p| **p > 0.0).count(), 2);
    }

    #[test]
    fn empty_image_set() {
        assert!(matches!(intensity_histogram(&[]), Err(ShiftError::NoImages)));
    }

    #[test]
    fn js_examples() {
        let p = Histogram::new(vec![0.5, 0.5]).unwrap();
        let q = Histogram::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
        let v = js_divergence(&p, &q).unwrap();
        assert!((v - 0.215_761_554_338_835_65).abs() < 1e-15);
        let a = Histogram::new(vec![1.0, 0.0, 0.0]).unwrap();
        let b = Histogram::new(vec![0.0, 0.3, 0.7]).unwrap();
        assert!((js_divergence(&a, &b).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let c = Histogram::new(vec![1.0]).unwrap();
        assert!(matches!(js_divergence(&a, &c), Err(ShiftError::BinMismatch(3, 1))));
    }

    #[test]
    fn histogram_validation() {
        assert!(Histogram::new(vec![0.5, 0.4]).is_err());
        assert!(Histogram::new(vec![1.5, -0.5]).is_err());
        assert!(Histogram::from_counts(&[0.0, 0.0]).is_err());
        assert_eq!(Histogram::from_counts(&[1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
    }

    #[test]
    fn sweep_identity_at_zero_offset() {
        let cfg = SweepConfig {
            metrics: MetricKind::ALL.into_iter().filter(MetricKind::is_similarity).collect(),
            ..SweepConfig::default()
        };
        for c in sweep(&cfg, &MetricParams::default()).unwrap() {
            assert_eq!(c.samples[0], (0.0, 1.0), "{}", c.metric);
        }
    }

    #[test]
    fn nwd_curves_collapse_across_sizes() {
        let cfg = SweepConfig {
            metrics: vec![MetricKind::Nwd],
            ..SweepConfig::default()
        };
        let curves = sweep(&cfg, &MetricParams::default()).unwrap();
        for c in &curves[1..] {
            for (a, b) in c.samples.iter().zip(&curves[0].samples) {
                assert!((a.1 - b.1).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn iou_vanishes_where_nwd_does_not() {
        let cfg = SweepConfig {
            box_sizes: vec![4.0],
            max_offset: 8.0,
            metrics: vec![MetricKind::IoU, MetricKind::Nwd],
            ..SweepConfig::default()
        };
        let curves = sweep(&cfg, &MetricParams::default()).unwrap();
        let (iou_c, nwd_c) = (&curves[0], &curves[1]);
        for (a, b) in iou_c.samples.iter().zip(&nwd_c.samples) {
            // per-axis shift d/√2 >= 4 leaves no overlap
            if a.0 / std::f64::consts::SQRT_2 >= 4.0 {
                assert_eq!(a.1, 0.0);
            }
            assert!(b.1 > 0.8);
        }
    }

    #[test]
    fn smoothness_examples() {
        let flat = SweepCurve {
            metric: MetricKind::IoU,
            box_size: 4.0,
            samples: vec![(0.0, 0.3), (1.0, 0.3), (2.0, 0.3)],
        };
        assert_eq!(smoothness_report(&[flat]).unwrap()[0].max_abs_slope, 0.0);
        let short = SweepCurve {
            metric: MetricKind::IoU,
            box_size: 4.0,
            samples: vec![(0.0, 1.0)],
        };
        assert!(smoothness_report(&[short]).is_err());

        let cfg = SweepConfig {
            box_sizes: vec![4.0],
            metrics: vec![MetricKind::IoU, MetricKind::Nwd],
            ..SweepConfig::default()
        };
        let rows = smoothness_report(&sweep(&cfg, &MetricParams::default()).unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].max_abs_slope < rows[0].max_abs_slope);
    }

    #[test]
    fn offsets_include_endpoint() {
        let cfg = SweepConfig {
            max_offset: 1.0,
            step: 0.1,
            ..SweepConfig::default()
        };
        let o = cfg.offsets();
        assert_eq!(o.len(), 11);
        assert!((o[10] - 1.0).abs() < 1e-12);
        assert!(SweepConfig { step: 0.0, ..SweepConfig::default() }.validate().is_err());
    }

    fn arb_hist(n: usize) -> impl Strategy<Value = Histogram> {
        prop::collection::vec(0.0f64..1.0, n)
            .prop_filter("mass", |v| v.iter().sum::<f64>() > 1e-3)
            .prop_map(|v| Histogram::from_counts(&v).unwrap())
    }

    proptest! {
        #[test]
        fn js_symmetric_and_bounded(p in arb_hist(16), q in arb_hist(16)) {
            let a = js_divergence(&p, &q).unwrap();
            let b = js_divergence(&q, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=std::f64::consts::LN_2).contains(&a));
        }

        #[test]
        fn pooling_order_independent(a in prop::collection::vec(any::<u8>(), 12), b in prop::collection::vec(any::<u8>(), 6)) {
            let ia = GrayImage::new(4, 3, a).unwrap();
            let ib = GrayImage::new(3, 2, b).unwrap();
            let h1 = intensity_histogram(&[ia.clone(), ib.clone()]).unwrap();
            let h2 = intensity_histogram(&[ib, ia]).unwrap();
            prop_assert_eq!(h1.clone(), h2);
            let s: f64 = h1.probs().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn nwd_sweep_monotone(size in 1.0f64..64.0, scale in 0.25f64..2.0) {
            let cfg = SweepConfig {
                box_sizes: vec![size],
                pred_scale: scale,
                metrics: vec![MetricKind::Nwd],
                ..SweepConfig::default()
            };
            let c = &sweep(&cfg, &MetricParams::default()).unwrap()[0];
            for w in c.samples.windows(2) {
                prop_assert!(w[1].1 <= w[0].1);
            }
        }
    }
}
