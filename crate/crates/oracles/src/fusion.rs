//! Per-pixel loops for the fusion sub-operations.

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[c * self.h * self.w + y * self.w + x]
    }

    /// Zero outside the grid.
    pub fn get_padded(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }
}

/// Half-pixel source coordinate, clamped at 0, and its two neighbours.
fn source(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let mut s = (i as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
    if s < 0.0 {
        s = 0.0;
    }
    let mut lo = s.floor() as usize;
    if lo > n_in - 1 {
        lo = n_in - 1;
    }
    let hi = if lo + 1 < n_in { lo + 1 } else { n_in - 1 };
    (lo, hi, s - lo as f64)
}

pub fn bilinear(src: &Grid, out_h: usize, out_w: usize) -> Grid {
    let mut data = Vec::new();
    for c in 0..src.c {
        for y in 0..out_h {
            for x in 0..out_w {
                let (y0, y1, fy) = source(y, src.h, out_h);
                let (x0, x1, fx) = source(x, src.w, out_w);
                let v = (1.0 - fy) * (1.0 - fx) * src.get(c, y0, x0)
                    + (1.0 - fy) * fx * src.get(c, y0, x1)
                    + fy * (1.0 - fx) * src.get(c, y1, x0)
                    + fy * fx * src.get(c, y1, x1);
                data.push(v);
            }
        }
    }
    Grid::new(src.c, out_h, out_w, data)
}

/// Output cell `i` averages source cells `floor(i·in/out) .. ceil((i+1)·in/out)`.
pub fn avg_pool(src: &Grid, out_h: usize, out_w: usize) -> Grid {
    let window = |i: usize, n_in: usize, n_out: usize| {
        let a = (i as f64 * n_in as f64 / n_out as f64).floor() as usize;
        let b = ((i + 1) as f64 * n_in as f64 / n_out as f64).ceil() as usize;
        (a, b)
    };
    let mut data = Vec::new();
    for c in 0..src.c {
        for y in 0..out_h {
            for x in 0..out_w {
                let (ya, yb) = window(y, src.h, out_h);
                let (xa, xb) = window(x, src.w, out_w);
                let mut vals = Vec::new();
                for yy in ya..yb {
                    for xx in xa..xb {
                        vals.push(src.get(c, yy, xx));
                    }
                }
                data.push(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
    }
    Grid::new(src.c, out_h, out_w, data)
}

/// Pool along axes where the source is larger, interpolate where it is smaller.
pub fn resize(src: &Grid, h: usize, w: usize) -> Grid {
    if (src.h, src.w) == (h, w) {
        return src.clone();
    }
    let pooled = avg_pool(src, src.h.min(h), src.w.min(w));
    if (pooled.h, pooled.w) == (h, w) {
        pooled
    } else {
        bilinear(&pooled, h, w)
    }
}

/// Same-size convolution, `weight[o][i][ky][kx]` flattened, zero padding `k/2`.
pub fn conv(src: &Grid, weight: &[f64], bias: &[f64], k: usize) -> Grid {
    let out_c = bias.len();
    assert_eq!(weight.len(), out_c * src.c * k * k);
    let r = (k / 2) as isize;
    let mut data = Vec::new();
    for o in 0..out_c {
        for y in 0..src.h {
            for x in 0..src.w {
                let mut s = bias[o];
                for i in 0..src.c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = weight[o * src.c * k * k + i * k * k + ky * k + kx];
                            s += wv * src.get_padded(i, y as isize + ky as isize - r, x as isize + kx as isize - r);
                        }
                    }
                }
                data.push(s);
            }
        }
    }
    Grid::new(out_c, src.h, src.w, data)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct InjectWeights<'a> {
    pub embed: (&'a [f64], &'a [f64]),
    pub gate: (&'a [f64], &'a [f64]),
    pub proj: (&'a [f64], &'a [f64]),
    pub repconv: (&'a [f64], &'a [f64]),
}

/// `repconv(embed(l) · σ(gate(g')) + proj(g'))` with `g'` the global map at the local size.
pub fn inject(local: &Grid, global: &Grid, w: &InjectWeights<'_>) -> Grid {
    let g = resize(global, local.h, local.w);
    let c = local.c;
    let mut mixed = vec![0.0; c * local.h * local.w];
    for y in 0..local.h {
        for x in 0..local.w {
            for o in 0..c {
                let mut e = w.embed.1[o];
                let mut a = w.gate.1[o];
                let mut p = w.proj.1[o];
                for i in 0..c {
                    e += w.embed.0[o * c + i] * local.get(i, y, x);
                }
                for i in 0..g.c {
                    a += w.gate.0[o * g.c + i] * g.get(i, y, x);
                    p += w.proj.0[o * g.c + i] * g.get(i, y, x);
                }
                mixed[o * local.h * local.w + y * local.w + x] = e * sigmoid(a) + p;
            }
        }
    }
    conv(&Grid::new(c, local.h, local.w, mixed), w.repconv.0, w.repconv.1, 3)
}

pub struct Projections<'a> {
    /// `[out][in]` flattened, then bias.
    pub q: (&'a [f64], &'a [f64]),
    pub k: (&'a [f64], &'a [f64]),
    pub v: (&'a [f64], &'a [f64]),
    pub o: (&'a [f64], &'a [f64]),
}

fn project(m: (&[f64], &[f64]), x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..m.1.len())
        .map(|r| m.1[r] + (0..n).map(|j| m.0[r * n + j] * x[j]).sum::<f64>())
        .collect()
}

/// Returns `(probs[head][i][j], output[i])` for scaled dot-product attention.
pub fn attention(tokens: &[Vec<f64>], w: &Projections<'_>, heads: usize) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let d = tokens[0].len();
    let hd = d / heads;
    let q: Vec<_> = tokens.iter().map(|t| project(w.q, t)).collect();
    let k: Vec<_> = tokens.iter().map(|t| project(w.k, t)).collect();
    let v: Vec<_> = tokens.iter().map(|t| project(w.v, t)).collect();
    let n = tokens.len();
    let mut probs = vec![vec![vec![0.0; n]; n]; heads];
    let mut ctx = vec![vec![0.0; d]; n];
    for h in 0..heads {
        for i in 0..n {
            let mut e = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for c in h * hd..(h + 1) * hd {
                    dot += q[i][c] * k[j][c];
                }
                e[j] = (dot / (hd as f64).sqrt()).exp();
            }
            let z: f64 = e.iter().sum();
            for j in 0..n {
                probs[h][i][j] = e[j] / z;
                for c in h * hd..(h + 1) * hd {
                    ctx[i][c] += probs[h][i][j] * v[j][c];
                }
            }
        }
    }
    let out = ctx.iter().map(|c| project(w.o, c)).collect();
    (probs, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_and_upsample() {
        let g = Grid::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(avg_pool(&g, 1, 1).data, vec![2.5]);
        let up = bilinear(&g, 4, 4);
        assert_eq!(&up.data[..4], &[1.0, 1.25, 1.75, 2.0]);
    }

    #[test]
    fn two_token_attention_by_hand() {
        let id = [1.0, 0.0, 0.0, 1.0];
        let z = [0.0, 0.0];
        let w = Projections {
            q: (&id, &z),
            k: (&id, &z),
            v: (&id, &z),
            o: (&id, &z),
        };
        let t = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (p, out) = attention(&t, &w, 1);
        let s = 1.0 / 2f64.sqrt();
        let p00 = s.exp() / (s.exp() + 1.0);
        assert!((p[0][0][0] - p00).abs() < 1e-15);
        assert!((out[0][0] - p00).abs() < 1e-15);
        assert!((out[0][1] - (1.0 - p00)).abs() < 1e-15);
    }
}
