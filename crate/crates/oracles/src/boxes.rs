//! Box measures from corner coordinates. Boxes are passed as `[cx, cy, w, h]`.

use std::f64::consts::PI;

struct Corners {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

fn corners(b: &[f64; 4]) -> Corners {
    Corners {
        x0: b[0] - b[2] / 2.0,
        y0: b[1] - b[3] / 2.0,
        x1: b[0] + b[2] / 2.0,
        y1: b[1] + b[3] / 2.0,
    }
}

pub fn intersection(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let (p, q) = (corners(a), corners(b));
    let iw = (p.x1.min(q.x1) - p.x0.max(q.x0)).max(0.0);
    let ih = (p.y1.min(q.y1) - p.y0.max(q.y0)).max(0.0);
    iw * ih
}

pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let i = intersection(a, b);
    i / (a[2] * a[3] + b[2] * b[3] - i)
}

fn enclosing_diag_sq(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let (p, q) = (corners(a), corners(b));
    let w = p.x1.max(q.x1) - p.x0.min(q.x0);
    let h = p.y1.max(q.y1) - p.y0.min(q.y0);
    w * w + h * h
}

pub fn ciou(p: &[f64; 4], g: &[f64; 4]) -> f64 {
    let u = iou(p, g);
    let rho2 = (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2);
    let v = 4.0 / (PI * PI) * ((g[2] / g[3]).atan() - (p[2] / p[3]).atan()).powi(2);
    let alpha = if v == 0.0 { 0.0 } else { v / (1.0 - u + v) };
    u - rho2 / enclosing_diag_sq(p, g) - alpha * v
}

/// Squared 2-Wasserstein distance between the Gaussians N((cx, cy), diag(w²/4, h²/4)).
pub fn wasserstein2_sq(p: &[f64; 4], g: &[f64; 4]) -> f64 {
    let a = [p[0], p[1], p[2] / 2.0, p[3] / 2.0];
    let b = [g[0], g[1], g[2] / 2.0, g[3] / 2.0];
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn nwd(p: &[f64; 4], g: &[f64; 4], c: f64) -> f64 {
    (-wasserstein2_sq(p, g).sqrt() / c).exp()
}

pub fn combined_loss(p: &[f64; 4], g: &[f64; 4], c: f64, beta: f64) -> f64 {
    (1.0 - ciou(p, g)) + beta * (1.0 - nwd(p, g, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let p = [10.0, 10.0, 8.0, 8.0];
        let g = [13.0, 14.0, 8.0, 8.0];
        assert_eq!(wasserstein2_sq(&p, &g), 25.0);
        assert_eq!(nwd(&p, &g, 43.0), (-5.0f64 / 43.0).exp());
        // overlap 5 x 4 = 20, union 108
        assert_eq!(iou(&p, &g), 20.0 / 108.0);
        // enclosing 11 x 12, same aspect, so v = 0
        assert_eq!(ciou(&p, &g), 20.0 / 108.0 - 25.0 / 265.0);
        assert_eq!(iou(&[0.0, 0.0, 2.0, 2.0], &[5.0, 0.0, 2.0, 2.0]), 0.0);
    }
}
