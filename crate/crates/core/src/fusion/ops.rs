//! Resampling, convolution and gating primitives.
//!
//! Bilinear upsampling uses the half-pixel (align-corners-false) convention:
//! output pixel `i` samples source coordinate `(i + 0.5)·in/out − 0.5`,
//! clamped below at 0, with the upper neighbour clamped to the last row or
//! column. Adaptive average pooling averages source cells
//! `floor(i·in/out) .. ceil((i+1)·in/out)`.

use super::tensor::{FeatureMap, Tensor};
use crate::error::FusionError;

fn linear_taps(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, src - i0 as f64)
}

pub fn bilinear_resize(m: &FeatureMap, out_h: usize, out_w: usize) -> FeatureMap {
    let ys: Vec<_> = (0..out_h).map(|y| linear_taps(y, m.height(), out_h)).collect();
    let xs: Vec<_> = (0..out_w).map(|x| linear_taps(x, m.width(), out_w)).collect();
    FeatureMap::from_fn(m.channels(), out_h, out_w, |c, y, x| {
        let (y0, y1, ly) = ys[y];
        let (x0, x1, lx) = xs[x];
        // a + t·(b − a) reproduces a constant exactly
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let top = lerp(m.at(c, y0, x0), m.at(c, y0, x1), lx);
        let bottom = lerp(m.at(c, y1, x0), m.at(c, y1, x1), lx);
        lerp(top, bottom, ly)
    })
}

fn pool_window(i: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = i * in_len / out_len;
    let end = ((i + 1) * in_len).div_ceil(out_len);
    (start, end)
}

pub fn adaptive_avg_pool(m: &FeatureMap, out_h: usize, out_w: usize) -> FeatureMap {
    FeatureMap::from_fn(m.channels(), out_h, out_w, |c, y, x| {
        let (y0, y1) = pool_window(y, m.height(), out_h);
        let (x0, x1) = pool_window(x, m.width(), out_w);
        let mut acc = 0.0;
        for yy in y0..y1 {
            for xx in x0..x1 {
                acc += m.at(c, yy, xx);
            }
        }
        acc / ((y1 - y0) * (x1 - x0)) as f64
    })
}

/// Resizes to `(h, w)`: pooling where the map is larger, bilinear where it is
/// smaller, unchanged when equal. A map larger on one axis and smaller on the
/// other is pooled first, then upsampled.
pub fn resize_to(m: &FeatureMap, h: usize, w: usize) -> FeatureMap {
    let (mh, mw) = (m.height(), m.width());
    if (mh, mw) == (h, w) {
        return m.clone();
    }
    if mh >= h && mw >= w {
        return adaptive_avg_pool(m, h, w);
    }
    if mh <= h && mw <= w {
        return bilinear_resize(m, h, w);
    }
    let pooled = adaptive_avg_pool(m, mh.min(h), mw.min(w));
    bilinear_resize(&pooled, h, w)
}

pub fn align(features: &[FeatureMap], target: (usize, usize)) -> Result<Vec<FeatureMap>, FusionError> {
    if features.is_empty() {
        return Err(FusionError::InvalidSpec("nothing to align".into()));
    }
    if target.0 == 0 || target.1 == 0 {
        return Err(FusionError::InvalidSpec(format!("target size {}x{}", target.0, target.1)));
    }
    Ok(features.iter().map(|m| resize_to(m, target.0, target.1)).collect())
}

/// Stride-1 convolution with zero padding `k/2`; `weight` is `[out, in, k, k]`
/// with odd `k`, `bias` is `[out]`.
pub fn conv2d(input: &FeatureMap, weight: &Tensor, bias: &Tensor, name: &str) -> Result<FeatureMap, FusionError> {
    let [out_c, in_c, kh, kw] = match weight.shape[..] {
        [a, b, c, d] => [a, b, c, d],
        _ => {
            return Err(FusionError::Shape {
                what: format!("{name} weight"),
                expected: vec![0, input.channels(), 0, 0],
                actual: weight.shape.clone(),
            })
        }
    };
    if in_c != input.channels() || kh != kw || kh % 2 == 0 {
        return Err(FusionError::Shape {
            what: format!("{name} weight"),
            expected: vec![out_c, input.channels(), kh, kh],
            actual: weight.shape.clone(),
        });
    }
    if bias.shape != [out_c] {
        return Err(FusionError::Shape {
            what: format!("{name} bias"),
            expected: vec![out_c],
            actual: bias.shape.clone(),
        });
    }
    let pad = (kh / 2) as isize;
    let (h, w) = (input.height() as isize, input.width() as isize);
    Ok(FeatureMap::from_fn(out_c, input.height(), input.width(), |o, y, x| {
        let mut acc = bias.data[o];
        for i in 0..in_c {
            for ky in 0..kh {
                let sy = y as isize + ky as isize - pad;
                if sy < 0 || sy >= h {
                    continue;
                }
                for kx in 0..kw {
                    let sx = x as isize + kx as isize - pad;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    acc += weight.data[((o * in_c + i) * kh + ky) * kw + kx] * input.at(i, sy as usize, sx as usize);
                }
            }
        }
        acc
    }))
}

/// Logistic sigmoid, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
