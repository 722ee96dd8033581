//! Metric formulas, generic over [`Scalar`].
//!
//! Boxes are `[cx, cy, w, h]`. Definitions follow the usual published forms:
//!
//! * IoU  = |P∩G| / |P∪G|
//! * GIoU = IoU − (|E| − |P∪G|) / |E|, with E the smallest enclosing box
//! * DIoU = IoU − ρ²/c², ρ the center distance, c the diagonal of E
//! * CIoU = DIoU − α·v, v = 4/π²·(atan(w_g/h_g) − atan(w_p/h_p))², α = v / (1 − IoU + v)
//! * EIoU = DIoU − (w_p − w_g)²/E_w² − (h_p − h_g)²/E_h²
//! * SIoU = IoU − (Δ + Ω)/2 with angle cost Λ = sin 2θ, distance cost
//!   Δ = Σ_{x,y} (1 − exp(−(2 − Λ)·(d_t/E_t)²)) and shape cost
//!   Ω = Σ_{w,h} (1 − exp(−|p_t − g_t| / max(p_t, g_t)))⁴
//! * W₂² = (cx_p − cx_g)² + (cy_p − cy_g)² + ((w_p − w_g)/2)² + ((h_p − h_g)/2)²
//! * NWD = exp(−√W₂² / C)

use std::f64::consts::PI;

use super::dual::Scalar;

pub(crate) type Coords<T> = [T; 4];

pub(crate) struct Overlap<T> {
    pub iou: T,
    pub union: T,
    /// Enclosing box width and height.
    pub enc_w: T,
    pub enc_h: T,
}

fn edges<T: Scalar>(b: &Coords<T>) -> [T; 4] {
    let half = T::cst(0.5);
    let [cx, cy, w, h] = *b;
    [cx - w * half, cy - h * half, cx + w * half, cy + h * half]
}

pub(crate) fn overlap<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> Overlap<T> {
    let [px1, py1, px2, py2] = edges(p);
    let [gx1, gy1, gx2, gy2] = edges(g);
    let zero = T::cst(0.0);
    let iw = (px2.min(gx2) - px1.max(gx1)).max(zero);
    let ih = (py2.min(gy2) - py1.max(gy1)).max(zero);
    let inter = iw * ih;
    let union = p[2] * p[3] + g[2] * g[3] - inter;
    Overlap {
        iou: inter / union,
        union,
        enc_w: px2.max(gx2) - px1.min(gx1),
        enc_h: py2.max(gy2) - py1.min(gy1),
    }
}

pub(crate) fn iou<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    overlap(p, g).iou
}

pub(crate) fn giou<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    let o = overlap(p, g);
    let enc = o.enc_w * o.enc_h;
    o.iou - (enc - o.union) / enc
}

fn center_dist_sq<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    (p[0] - g[0]).sq() + (p[1] - g[1]).sq()
}

pub(crate) fn diou<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    let o = overlap(p, g);
    o.iou - center_dist_sq(p, g) / (o.enc_w.sq() + o.enc_h.sq())
}

pub(crate) fn aspect_term<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    T::cst(4.0 / (PI * PI)) * ((g[2] / g[3]).atan() - (p[2] / p[3]).atan()).sq()
}

/// CIoU. With `detach_alpha` the trade-off weight α enters as a constant,
/// which is how it is usually treated when CIoU serves as a training loss.
pub(crate) fn ciou<T: Scalar>(p: &Coords<T>, g: &Coords<T>, detach_alpha: bool) -> T {
    let o = overlap(p, g);
    let diou = o.iou - center_dist_sq(p, g) / (o.enc_w.sq() + o.enc_h.sq());
    let v = aspect_term(p, g);
    if v.value() == 0.0 {
        return diou;
    }
    let alpha = v / (T::cst(1.0) - o.iou + v);
    let alpha = if detach_alpha { T::cst(alpha.value()) } else { alpha };
    diou - alpha * v
}

pub(crate) fn eiou<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    let o = overlap(p, g);
    o.iou
        - center_dist_sq(p, g) / (o.enc_w.sq() + o.enc_h.sq())
        - (p[2] - g[2]).sq() / o.enc_w.sq()
        - (p[3] - g[3]).sq() / o.enc_h.sq()
}

pub(crate) const SIOU_SHAPE_EXPONENT: i32 = 4;

pub(crate) fn siou<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    let o = overlap(p, g);
    let one = T::cst(1.0);
    let dx = g[0] - p[0];
    let dy = g[1] - p[1];
    let sigma_sq = dx.sq() + dy.sq();
    // sin 2θ with sin θ = |dy|/σ, cos θ = |dx|/σ
    let angle = if sigma_sq.value() > 0.0 {
        T::cst(2.0) * dx.abs() * dy.abs() / sigma_sq
    } else {
        T::cst(0.0)
    };
    let gamma = T::cst(2.0) - angle;
    let rho_x = (dx / o.enc_w).sq();
    let rho_y = (dy / o.enc_h).sq();
    let distance = (one - (-(gamma * rho_x)).exp()) + (one - (-(gamma * rho_y)).exp());

    let omega_w = (p[2] - g[2]).abs() / p[2].max(g[2]);
    let omega_h = (p[3] - g[3]).abs() / p[3].max(g[3]);
    let shape_term = |om: T| {
        let b = one - (-om).exp();
        let mut acc = one;
        for _ in 0..SIOU_SHAPE_EXPONENT {
            acc = acc * b;
        }
        acc
    };
    let shape = shape_term(omega_w) + shape_term(omega_h);
    o.iou - (distance + shape) * T::cst(0.5)
}

pub(crate) fn wasserstein2_sq<T: Scalar>(p: &Coords<T>, g: &Coords<T>) -> T {
    let half = T::cst(0.5);
    (p[0] - g[0]).sq() + (p[1] - g[1]).sq() + ((p[2] - g[2]) * half).sq() + ((p[3] - g[3]) * half).sq()
}

pub(crate) fn nwd<T: Scalar>(p: &Coords<T>, g: &Coords<T>, c: f64) -> T {
    (-(wasserstein2_sq(p, g).sqrt() / T::cst(c))).exp()
}

pub(crate) fn combined_loss<T: Scalar>(p: &Coords<T>, g: &Coords<T>, c: f64, beta: f64, detach_alpha: bool) -> T {
    let one = T::cst(1.0);
    (one - ciou(p, g, detach_alpha)) + T::cst(beta) * (one - nwd(p, g, c))
}
