//! Pairwise box similarity measures and losses.
//!
//! All functions are pure. Gradients come from forward-mode dual numbers over
//! the same formulas that produce the values, see [`grad`].

mod dual;
mod formulas;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::geometry::BBox;

pub use dual::{Dual, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "iou")]
    IoU,
    #[serde(rename = "giou")]
    GIoU,
    #[serde(rename = "diou")]
    DIoU,
    #[serde(rename = "ciou")]
    CIoU,
    #[serde(rename = "eiou")]
    EIoU,
    #[serde(rename = "siou")]
    SIoU,
    #[serde(rename = "nwd")]
    Nwd,
    /// `(1 − CIoU) + β·(1 − NWD)`. A loss: lower is better.
    #[serde(rename = "combined")]
    Combined,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::IoU,
        MetricKind::GIoU,
        MetricKind::DIoU,
        MetricKind::CIoU,
        MetricKind::EIoU,
        MetricKind::SIoU,
        MetricKind::Nwd,
        MetricKind::Combined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::IoU => "iou",
            MetricKind::GIoU => "giou",
            MetricKind::DIoU => "diou",
            MetricKind::CIoU => "ciou",
            MetricKind::EIoU => "eiou",
            MetricKind::SIoU => "siou",
            MetricKind::Nwd => "nwd",
            MetricKind::Combined => "combined",
        }
    }

    /// Similarities are 1 at identity and larger is better.
    pub fn is_similarity(&self) -> bool {
        !matches!(self, MetricKind::Combined)
    }

    pub fn uses_overlap(&self) -> bool {
        !matches!(self, MetricKind::Nwd)
    }

    /// Value of this metric for the pair. For [`MetricKind::Combined`] this is the loss.
    pub fn evaluate(&self, p: &BBox, g: &BBox, params: &MetricParams) -> f64 {
        eval_generic::<f64>(*self, &p.to_array(), &g.to_array(), params, false)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

/// Normalization constant of the normalized Wasserstein distance, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NwdParams {
    c: f64,
}

impl NwdParams {
    pub const DEFAULT_C: f64 = 43.0;

    pub fn new(c: f64) -> Result<Self, MetricError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(MetricError::InvalidParam { name: "c", value: c });
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

impl Default for NwdParams {
    fn default() -> Self {
        Self { c: Self::DEFAULT_C }
    }
}

/// Parameters of the combined CIoU + NWD loss. Also carries the NWD constant,
/// so it doubles as the parameter set for every [`MetricKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedParams {
    beta: f64,
    pub nwd: NwdParams,
}

pub type MetricParams = CombinedParams;

impl CombinedParams {
    pub const DEFAULT_BETA: f64 = 0.5;

    pub fn new(beta: f64, nwd: NwdParams) -> Result<Self, MetricError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(MetricError::InvalidParam { name: "beta", value: beta });
        }
        Ok(Self { beta, nwd })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for CombinedParams {
    fn default() -> Self {
        Self {
            beta: Self::DEFAULT_BETA,
            nwd: NwdParams::default(),
        }
    }
}

fn eval_generic<T: Scalar>(kind: MetricKind, p: &[T; 4], g: &[T; 4], params: &MetricParams, detach: bool) -> T {
    match kind {
        MetricKind::IoU => formulas::iou(p, g),
        MetricKind::GIoU => formulas::giou(p, g),
        MetricKind::DIoU => formulas::diou(p, g),
        MetricKind::CIoU => formulas::ciou(p, g, detach),
        MetricKind::EIoU => formulas::eiou(p, g),
        MetricKind::SIoU => formulas::siou(p, g),
        MetricKind::Nwd => formulas::nwd(p, g, params.nwd.c()),
        MetricKind::Combined => formulas::combined_loss(p, g, params.nwd.c(), params.beta(), detach),
    }
}

pub fn iou(p: &BBox, g: &BBox) -> f64 {
    formulas::iou(&p.to_array(), &g.to_array())
}

pub fn giou(p: &BBox, g: &BBox) -> f64 {
    formulas::giou(&p.to_array(), &g.to_array())
}

pub fn diou(p: &BBox, g: &BBox) -> f64 {
    formulas::diou(&p.to_array(), &g.to_array())
}

pub fn ciou(p: &BBox, g: &BBox) -> f64 {
    formulas::ciou(&p.to_array(), &g.to_array(), false)
}

pub fn eiou(p: &BBox, g: &BBox) -> f64 {
    formulas::eiou(&p.to_array(), &g.to_array())
}

pub fn siou(p: &BBox, g: &BBox) -> f64 {
    formulas::siou(&p.to_array(), &g.to_array())
}

/// Squared 2-Wasserstein distance between the Gaussians fitted to the two boxes.
pub fn wasserstein2_sq(p: &BBox, g: &BBox) -> f64 {
    formulas::wasserstein2_sq(&p.to_array(), &g.to_array())
}

pub fn nwd(p: &BBox, g: &BBox, params: &NwdParams) -> f64 {
    formulas::nwd(&p.to_array(), &g.to_array(), params.c())
}

pub fn nwd_loss(p: &BBox, g: &BBox, params: &NwdParams) -> f64 {
    1.0 - nwd(p, g, params)
}

/// `L_CIoU + β·L_NWD`.
pub fn combined_loss(p: &BBox, g: &BBox, params: &CombinedParams) -> f64 {
    formulas::combined_loss(&p.to_array(), &g.to_array(), params.nwd.c(), params.beta(), false)
}

/// Row-major `preds.len() x gts.len()` matrix of metric values.
pub fn pairwise(kind: MetricKind, preds: &[BBox], gts: &[BBox], params: &MetricParams) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| kind.evaluate(p, g, params)).collect())
        .collect()
}

/// Partial derivatives with respect to
/// `(cx_p, cy_p, w_p, h_p, cx_g, cy_g, w_g, h_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grad8(pub [f64; 8]);

impl Grad8 {
    pub fn pred(&self) -> [f64; 4] {
        [self.0[0], self.0[1], self.0[2], self.0[3]]
    }

    pub fn gt(&self) -> [f64; 4] {
        [self.0[4], self.0[5], self.0[6], self.0[7]]
    }
}

/// Distance (in pixels, or in the metric's own kink variable) from the pair
/// to the nearest configuration where `kind` is not differentiable. Zero means
/// the pair sits on a kink.
///
/// Kinks come from the `min`/`max` in the intersection and enclosing box
/// (coincident or touching edges), the square root in NWD at identical boxes,
/// and the absolute values in SIoU's angle and shape costs. The check is
/// conservative: touching edges are reported even when the other axis does
/// not overlap.
pub fn distance_to_kink(kind: MetricKind, p: &BBox, g: &BBox) -> f64 {
    let pc = p.to_corner();
    let gc = g.to_corner();
    let overlap_kinks = || {
        let iw = pc.xmax.min(gc.xmax) - pc.xmin.max(gc.xmin);
        let ih = pc.ymax.min(gc.ymax) - pc.ymin.max(gc.ymin);
        [
            (pc.xmin - gc.xmin).abs(),
            (pc.xmax - gc.xmax).abs(),
            (pc.ymin - gc.ymin).abs(),
            (pc.ymax - gc.ymax).abs(),
            iw.abs(),
            ih.abs(),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    };
    let nwd_kink = || wasserstein2_sq(p, g).sqrt();
    match kind {
        MetricKind::IoU | MetricKind::GIoU | MetricKind::DIoU | MetricKind::CIoU | MetricKind::EIoU => overlap_kinks(),
        MetricKind::SIoU => [
            overlap_kinks(),
            (p.cx() - g.cx()).abs(),
            (p.cy() - g.cy()).abs(),
            (p.w() - g.w()).abs(),
            (p.h() - g.h()).abs(),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min),
        MetricKind::Nwd => nwd_kink(),
        MetricKind::Combined => overlap_kinks().min(nwd_kink()),
    }
}

fn kink_reason(kind: MetricKind, p: &BBox, g: &BBox) -> &'static str {
    match kind {
        MetricKind::Nwd => "identical boxes (square root at zero distance)",
        MetricKind::SIoU if p.cx() == g.cx() || p.cy() == g.cy() => "centers aligned on an axis (angle cost kink)",
        MetricKind::SIoU if p.w() == g.w() || p.h() == g.h() => "equal width or height (shape cost kink)",
        MetricKind::Combined if wasserstein2_sq(p, g) == 0.0 => "identical boxes (square root at zero distance)",
        _ => "coincident or touching edges",
    }
}

/// Exact gradient of [`MetricKind::evaluate`] with respect to all eight coordinates.
pub fn grad(kind: MetricKind, p: &BBox, g: &BBox, params: &MetricParams) -> Result<Grad8, MetricError> {
    grad_impl(kind, p, g, params, false)
}

/// Gradient of CIoU (or the combined loss) with the α weight held constant,
/// the form used when these serve as training objectives. For other kinds
/// this equals [`grad`].
pub fn grad_detached_alpha(kind: MetricKind, p: &BBox, g: &BBox, params: &MetricParams) -> Result<Grad8, MetricError> {
    grad_impl(kind, p, g, params, true)
}

fn grad_impl(kind: MetricKind, p: &BBox, g: &BBox, params: &MetricParams, detach: bool) -> Result<Grad8, MetricError> {
    if distance_to_kink(kind, p, g) == 0.0 {
        return Err(MetricError::NonDifferentiable {
            kind,
            reason: kink_reason(kind, p, g),
        });
    }
    let pa = p.to_array();
    let ga = g.to_array();
    let pd: [Dual; 4] = std::array::from_fn(|i| Dual::var(pa[i], i));
    let gd: [Dual; 4] = std::array::from_fn(|i| Dual::var(ga[i], i + 4));
    let out = eval_generic(kind, &pd, &gd, params, detach);
    Ok(Grad8(out.d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    fn params() -> MetricParams {
        MetricParams::default()
    }

    #[test]
    fn iou_examples() {
        let p = b(2.0, 2.0, 4.0, 4.0);
        assert_eq!(iou(&p, &p), 1.0);
        assert_eq!(iou(&p, &b(20.0, 20.0, 4.0, 4.0)), 0.0);
        assert!((iou(&p, &b(4.0, 2.0, 4.0, 4.0)) - 8.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn touching_boxes_have_zero_iou() {
        let p = b(2.0, 2.0, 4.0, 4.0);
        let g = b(6.0, 2.0, 4.0, 4.0);
        assert_eq!(iou(&p, &g), 0.0);
        assert!(matches!(
            grad(MetricKind::IoU, &p, &g, &params()),
            Err(MetricError::NonDifferentiable { .. })
        ));
    }

    #[test]
    fn identity_is_one_for_every_similarity() {
        let p = b(7.5, -3.0, 5.0, 9.0);
        for kind in MetricKind::ALL.into_iter().filter(MetricKind::is_similarity) {
            assert_eq!(kind.evaluate(&p, &p, &params()), 1.0, "{kind}");
        }
        assert_eq!(combined_loss(&p, &p, &params()), 0.0);
    }

    #[test]
    fn giou_separated_boxes() {
        let v = giou(&b(2.0, 2.0, 4.0, 4.0), &b(10.0, 2.0, 4.0, 4.0));
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ciou_equals_diou_for_equal_aspect() {
        let p = b(3.0, 4.0, 4.0, 2.0);
        let g = b(5.0, 3.5, 8.0, 4.0);
        assert_eq!(ciou(&p, &g), diou(&p, &g));
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein2_sq(&b(10.0, 10.0, 8.0, 8.0), &b(13.0, 14.0, 8.0, 8.0)), 25.0);
        assert_eq!(wasserstein2_sq(&b(0.0, 0.0, 4.0, 4.0), &b(0.0, 0.0, 8.0, 8.0)), 8.0);
        let p = b(1.0, 1.0, 3.0, 3.0);
        assert_eq!(wasserstein2_sq(&p, &p), 0.0);
    }

    #[test]
    fn nwd_examples() {
        let p = b(10.0, 10.0, 8.0, 8.0);
        let g = b(13.0, 14.0, 8.0, 8.0);
        let c = NwdParams::default();
        assert_eq!(nwd(&p, &g, &c), (-5.0f64 / 43.0).exp());
        assert!((nwd(&p, &g, &c) - 0.890_226_753_255_845_2).abs() < 1e-15);
        assert!((nwd_loss(&p, &g, &c) - 0.109_773_246_744_154_78).abs() < 1e-15);
        assert_eq!(nwd(&p, &p, &NwdParams::new(3.0).unwrap()), 1.0);
        assert_eq!(nwd_loss(&p, &p, &c), 0.0);
    }

    #[test]
    fn nwd_depends_only_on_offset_for_equal_sizes() {
        let c = NwdParams::default();
        let a = nwd(&b(0.0, 0.0, 4.0, 4.0), &b(3.0, 4.0, 4.0, 4.0), &c);
        let z = nwd(&b(100.0, 50.0, 30.0, 12.0), &b(104.0, 53.0, 30.0, 12.0), &c);
        assert_eq!(a, z);
    }

    #[test]
    fn combined_loss_examples() {
        let p = b(10.0, 10.0, 8.0, 8.0);
        let g = b(13.0, 14.0, 8.0, 8.0);
        let zero_beta = CombinedParams::new(0.0, NwdParams::default()).unwrap();
        assert_eq!(combined_loss(&p, &g, &zero_beta), 1.0 - ciou(&p, &g));
        let expected = (1.0 - ciou(&p, &g)) + 0.5 * (1.0 - (-5.0f64 / 43.0).exp());
        assert!((combined_loss(&p, &g, &params()) - expected).abs() < 1e-15);
        assert!((0.5 * nwd_loss(&p, &g, &NwdParams::default()) - 0.054_886_623_372_077_39).abs() < 1e-15);
    }

    #[test]
    fn nwd_gradient_closed_form() {
        let p = b(10.0, 10.0, 8.0, 8.0);
        let g = b(13.0, 14.0, 8.0, 8.0);
        let gr = grad(MetricKind::Nwd, &p, &g, &params()).unwrap();
        // d√W/dcx = (10 − 13)/5, so moving the prediction toward g raises NWD
        let expected = (3.0 / 5.0) * (1.0 / 43.0) * (-5.0f64 / 43.0).exp();
        assert!((gr.0[0] - expected).abs() < 1e-15, "{:?}", gr);
        assert!((gr.0[0] - 0.012_421_768_650_081_561).abs() < 1e-15);
        assert!((gr.0[4] + gr.0[0]).abs() < 1e-18);
        assert_eq!(gr.0[2], 0.0);
    }

    #[test]
    fn nwd_gradient_at_identity_is_reported() {
        let p = b(1.0, 2.0, 3.0, 4.0);
        let err = grad(MetricKind::Nwd, &p, &p, &params()).unwrap_err();
        assert!(matches!(err, MetricError::NonDifferentiable { kind: MetricKind::Nwd, .. }));
        assert!(grad(MetricKind::Combined, &p, &p, &params()).is_err());
    }

    #[test]
    fn siou_kinks_are_reported() {
        let p = b(1.0, 2.0, 3.0, 4.0);
        assert!(grad(MetricKind::SIoU, &p, &b(1.0, 2.5, 3.5, 4.5), &params()).is_err());
        assert!(grad(MetricKind::SIoU, &p, &b(1.2, 2.5, 3.0, 4.5), &params()).is_err());
        assert!(grad(MetricKind::SIoU, &p, &b(1.2, 2.5, 3.5, 4.5), &params()).is_ok());
    }

    #[test]
    fn detached_alpha_differs_only_for_ciou_terms() {
        let p = b(1.0, 2.0, 3.0, 5.0);
        let g = b(1.7, 2.9, 4.1, 4.5);
        let full = grad(MetricKind::CIoU, &p, &g, &params()).unwrap();
        let det = grad_detached_alpha(MetricKind::CIoU, &p, &g, &params()).unwrap();
        assert_ne!(full, det);
        assert_eq!(
            grad(MetricKind::Nwd, &p, &g, &params()).unwrap(),
            grad_detached_alpha(MetricKind::Nwd, &p, &g, &params()).unwrap()
        );
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(NwdParams::new(0.0).is_err());
        assert!(NwdParams::new(f64::NAN).is_err());
        assert!(CombinedParams::new(-0.1, NwdParams::default()).is_err());
    }

    #[test]
    fn metric_kind_parse_round_trip() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<MetricKind>(&json).unwrap(), k);
        }
        assert!("foo".parse::<MetricKind>().is_err());
    }

    #[test]
    fn pairwise_shape() {
        let ps = [b(0.0, 0.0, 2.0, 2.0), b(1.0, 1.0, 2.0, 2.0)];
        let gs = [b(0.0, 0.0, 2.0, 2.0)];
        let m = pairwise(MetricKind::IoU, &ps, &gs, &params());
        assert_eq!(m.len(), 2);
        assert_eq!(m[0], vec![1.0]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0f64..50.0, -50.0f64..50.0, 0.5f64..40.0, 0.5f64..40.0).prop_map(|(cx, cy, w, h)| b(cx, cy, w, h))
    }

    proptest! {
        #[test]
        fn symmetric_metrics(p in arb_box(), g in arb_box()) {
            let prm = params();
            for kind in [MetricKind::IoU, MetricKind::GIoU, MetricKind::DIoU, MetricKind::CIoU, MetricKind::Nwd] {
                let a = kind.evaluate(&p, &g, &prm);
                let z = kind.evaluate(&g, &p, &prm);
                prop_assert!((a - z).abs() <= 1e-12, "{} {} {}", kind, a, z);
            }
            prop_assert_eq!(wasserstein2_sq(&p, &g), wasserstein2_sq(&g, &p));
        }

        #[test]
        fn translation_invariant(p in arb_box(), g in arb_box(), dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
            let prm = params();
            let pt = p.translated(dx, dy).unwrap();
            let gt = g.translated(dx, dy).unwrap();
            for kind in MetricKind::ALL {
                let a = kind.evaluate(&p, &g, &prm);
                let z = kind.evaluate(&pt, &gt, &prm);
                prop_assert!((a - z).abs() <= 1e-9, "{} {} {}", kind, a, z);
            }
        }

        #[test]
        fn nwd_scale_equals_constant_rescale(p in arb_box(), g in arb_box(), s in 0.1f64..10.0) {
            let c = 43.0;
            let lhs = nwd(&p.scaled(s).unwrap(), &g.scaled(s).unwrap(), &NwdParams::new(c).unwrap());
            let rhs = nwd(&p, &g, &NwdParams::new(c / s).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn ranges(p in arb_box(), g in arb_box()) {
            let i = iou(&p, &g);
            prop_assert!((0.0..=1.0).contains(&i));
            let n = nwd(&p, &g, &NwdParams::default());
            prop_assert!(n > 0.0 && n <= 1.0);
            let gi = giou(&p, &g);
            prop_assert!(gi > -1.0 && gi <= 1.0);
            let di = diou(&p, &g);
            prop_assert!(di > -1.0 && di <= 1.0);
            // the aspect penalty α·v is at most 1/2, so CIoU stays above −1.5
            let ci = ciou(&p, &g);
            prop_assert!(ci > -1.5 && ci <= 1.0);
            if p != g {
                prop_assert!(n < 1.0);
                prop_assert!(i < 1.0);
            }
        }

        #[test]
        fn nwd_loss_increases_with_offset(w in 1.0f64..50.0, h in 1.0f64..50.0, d1 in 0.0f64..100.0, extra in 1e-6f64..50.0) {
            let g = b(0.0, 0.0, w, h);
            let c = NwdParams::default();
            let a = nwd_loss(&b(d1, 0.0, w, h), &g, &c);
            let z = nwd_loss(&b(d1 + extra, 0.0, w, h), &g, &c);
            prop_assert!(z > a);
        }
    }
}
