//! Multi-head self-attention and the feed-forward block used by the deep
//! (high-level) fusion branch. Tokens are rows; projections are `[out, in]`
//! matrices applied as `y = W x + b`.

use super::tensor::Tensor;
use crate::error::FusionError;

pub struct Linear<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

impl Linear<'_> {
    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    fn check(&self, name: &str, in_dim: usize) -> Result<(), FusionError> {
        if self.weight.shape.len() != 2 || self.weight.shape[1] != in_dim {
            return Err(FusionError::Shape {
                what: format!("{name} weight"),
                expected: vec![self.weight.shape.first().copied().unwrap_or(0), in_dim],
                actual: self.weight.shape.clone(),
            });
        }
        if self.bias.shape != [self.weight.shape[0]] {
            return Err(FusionError::Shape {
                what: format!("{name} bias"),
                expected: vec![self.weight.shape[0]],
                actual: self.bias.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (out, inp) = (self.out_dim(), self.in_dim());
        (0..out)
            .map(|o| {
                let row = &self.weight.data[o * inp..(o + 1) * inp];
                self.bias.data[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

pub struct AttentionWeights<'a> {
    pub query: Linear<'a>,
    pub key: Linear<'a>,
    pub value: Linear<'a>,
    pub output: Linear<'a>,
}

pub struct FeedForward<'a> {
    pub fc1: Linear<'a>,
    pub fc2: Linear<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `[head][query][key]`, each row sums to 1.
    pub probs: Vec<Vec<Vec<f64>>>,
    /// Per-token concatenation of head outputs, before the output projection.
    pub context: Vec<Vec<f64>>,
    /// After the output projection.
    pub output: Vec<Vec<f64>>,
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Scaled dot-product attention, `heads` equal slices of the model width.
pub fn multi_head_attention(tokens: &[Vec<f64>], w: &AttentionWeights<'_>, heads: usize) -> Result<AttentionOutput, FusionError> {
    let dim = tokens.first().map(Vec::len).ok_or_else(|| FusionError::InvalidSpec("no tokens".into()))?;
    if heads == 0 || dim % heads != 0 {
        return Err(FusionError::HeadSplit { channels: dim, heads });
    }
    w.query.check("query", dim)?;
    w.key.check("key", dim)?;
    w.value.check("value", dim)?;
    w.output.check("output", dim)?;
    for (name, l) in [("query", &w.query), ("key", &w.key), ("value", &w.value), ("output", &w.output)] {
        if l.out_dim() != dim {
            return Err(FusionError::Shape {
                what: format!("{name} weight"),
                expected: vec![dim, dim],
                actual: l.weight.shape.clone(),
            });
        }
    }

    let q: Vec<Vec<f64>> = tokens.iter().map(|t| w.query.apply(t)).collect();
    let k: Vec<Vec<f64>> = tokens.iter().map(|t| w.key.apply(t)).collect();
    let v: Vec<Vec<f64>> = tokens.iter().map(|t| w.value.apply(t)).collect();
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let n = tokens.len();

    let mut probs = Vec::with_capacity(heads);
    let mut context = vec![vec![0.0; dim]; n];
    for h in 0..heads {
        let r = h * hd..(h + 1) * hd;
        let mut head_probs = Vec::with_capacity(n);
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let p = softmax(&scores);
            for (j, pj) in p.iter().enumerate() {
                for d in r.clone() {
                    context[i][d] += pj * v[j][d];
                }
            }
            head_probs.push(p);
        }
        probs.push(head_probs);
    }
    let output = context.iter().map(|c| w.output.apply(c)).collect();
    Ok(AttentionOutput { probs, context, output })
}

/// `fc2(relu(fc1(x)))`.
pub fn feed_forward(x: &[f64], ff: &FeedForward<'_>) -> Result<Vec<f64>, FusionError> {
    ff.fc1.check("ffn.fc1", x.len())?;
    ff.fc2.check("ffn.fc2", ff.fc1.out_dim())?;
    let hidden: Vec<f64> = ff.fc1.apply(x).into_iter().map(|v| v.max(0.0)).collect();
    Ok(ff.fc2.apply(&hidden))
}

/// Residual attention followed by a residual feed-forward, token-wise.
pub fn transformer_block(
    tokens: &[Vec<f64>],
    attn: &AttentionWeights<'_>,
    ff: &FeedForward<'_>,
    heads: usize,
) -> Result<(Vec<Vec<f64>>, AttentionOutput), FusionError> {
    let a = multi_head_attention(tokens, attn, heads)?;
    let mut out = Vec::with_capacity(tokens.len());
    for (t, o) in tokens.iter().zip(&a.output) {
        let x1: Vec<f64> = t.iter().zip(o).map(|(a, b)| a + b).collect();
        let f = feed_forward(&x1, ff)?;
        out.push(x1.iter().zip(&f).map(|(a, b)| a + b).collect());
    }
    if ff.fc2.out_dim() != tokens[0].len() {
        return Err(FusionError::Shape {
            what: "ffn.fc2 weight".into(),
            expected: vec![tokens[0].len(), ff.fc1.out_dim()],
            actual: ff.fc2.weight.shape.clone(),
        });
    }
    Ok((out, a))
}
