//! Gather-and-distribute forward pass.
//!
//! Injection of a global map `g` into a local map `l`, with `g' = resize(g, l)`:
//!
//! ```text
//! out = repconv(embed(l) ⊙ σ(gate(g')) + proj(g'))
//! ```
//!
//! `embed`, `gate` and `proj` are 1×1 convolutions, `repconv` a single 3×3.

use super::attention::{transformer_block, AttentionWeights, FeedForward, Linear};
use super::ops::{align, conv2d, resize_to, sigmoid};
use super::spec::{Pyramid, PyramidSpec};
use super::tensor::FeatureMap;
use super::weights::FusionWeights;
use crate::error::FusionError;

pub fn inject(local: &FeatureMap, global: &FeatureMap, weights: &FusionWeights, prefix: &str) -> Result<FeatureMap, FusionError> {
    let conv = |x: &FeatureMap, part: &str| {
        let name = format!("{prefix}.{part}");
        conv2d(
            x,
            weights.get(&format!("{name}.weight"))?,
            weights.get(&format!("{name}.bias"))?,
            &name,
        )
    };
    let g = resize_to(global, local.height(), local.width());
    let embed = conv(local, "embed")?;
    let gate = conv(&g, "gate")?.map(sigmoid);
    let proj = conv(&g, "proj")?;
    let mixed = embed.zip_with(&gate, |a, b| a * b)?.zip_with(&proj, |a, b| a + b)?;
    let out = conv(&mixed, "repconv")?;
    if out.shape() != local.shape() {
        return Err(FusionError::Shape {
            what: format!("{prefix} output"),
            expected: local.shape().to_vec(),
            actual: out.shape().to_vec(),
        });
    }
    Ok(out)
}

fn gather(pyramid: &Pyramid, spec: &PyramidSpec, names: &[String], align_to: &str) -> Result<FeatureMap, FusionError> {
    let maps = names
        .iter()
        .map(|n| pyramid.get(n).cloned())
        .collect::<Result<Vec<_>, _>>()?;
    FeatureMap::concat(&align(&maps, spec.level_size(align_to)?)?)
}

fn distribute(
    pyramid: &Pyramid,
    spec: &PyramidSpec,
    weights: &FusionWeights,
    phase: &str,
    targets: &[String],
    global: &FeatureMap,
) -> Result<Pyramid, FusionError> {
    let parts = global.split(&spec.channels_of(targets)?)?;
    let mut out = pyramid.clone();
    for (t, g) in targets.iter().zip(&parts) {
        let fused = inject(pyramid.get(t)?, g, weights, &format!("{phase}.inject.{t}"))?;
        out.set(t, fused)?;
    }
    Ok(out)
}

/// Shallow branch. Returns the whole pyramid with the low targets replaced.
pub fn low_gd(pyramid: &Pyramid, spec: &PyramidSpec, weights: &FusionWeights) -> Result<Pyramid, FusionError> {
    let cat = gather(pyramid, spec, &spec.low.gather, &spec.low.align_to)?;
    let global = conv2d(&cat, weights.get("low.fuse.weight")?, weights.get("low.fuse.bias")?, "low.fuse")?;
    distribute(pyramid, spec, weights, "low", &spec.low.targets, &global)
}

fn linear<'a>(weights: &'a FusionWeights, name: &str) -> Result<Linear<'a>, FusionError> {
    Ok(Linear {
        weight: weights.get(&format!("{name}.weight"))?,
        bias: weights.get(&format!("{name}.bias"))?,
    })
}

/// Row-major spatial positions as tokens of width `channels`.
pub fn to_tokens(m: &FeatureMap) -> Vec<Vec<f64>> {
    let mut tokens = Vec::with_capacity(m.height() * m.width());
    for y in 0..m.height() {
        for x in 0..m.width() {
            tokens.push((0..m.channels()).map(|c| m.at(c, y, x)).collect());
        }
    }
    tokens
}

pub fn from_tokens(tokens: &[Vec<f64>], height: usize, width: usize) -> Result<FeatureMap, FusionError> {
    let channels = tokens.first().map_or(0, Vec::len);
    if tokens.len() != height * width || tokens.iter().any(|t| t.len() != channels) {
        return Err(FusionError::Shape {
            what: "token sequence".into(),
            expected: vec![height * width, channels],
            actual: vec![tokens.len()],
        });
    }
    Ok(FeatureMap::from_fn(channels, height, width, |c, y, x| tokens[y * width + x][c]))
}

/// Deep branch. Returns the whole pyramid with the high targets replaced.
pub fn high_gd(pyramid: &Pyramid, spec: &PyramidSpec, weights: &FusionWeights) -> Result<Pyramid, FusionError> {
    let cat = gather(pyramid, spec, &spec.high.gather, &spec.high.align_to)?;
    let attn = AttentionWeights {
        query: linear(weights, "high.attn.q")?,
        key: linear(weights, "high.attn.k")?,
        value: linear(weights, "high.attn.v")?,
        output: linear(weights, "high.attn.o")?,
    };
    let ffn = FeedForward {
        fc1: linear(weights, "high.ffn.fc1")?,
        fc2: linear(weights, "high.ffn.fc2")?,
    };
    let (tokens, _) = transformer_block(&to_tokens(&cat), &attn, &ffn, spec.high.heads)?;
    let mixed = from_tokens(&tokens, cat.height(), cat.width())?;
    let global = conv2d(&mixed, weights.get("high.fuse.weight")?, weights.get("high.fuse.bias")?, "high.fuse")?;
    distribute(pyramid, spec, weights, "high", &spec.high.targets, &global)
}

/// Low branch, then high branch on its output. Every level keeps its shape.
pub fn forward(inputs: &Pyramid, spec: &PyramidSpec, weights: &FusionWeights) -> Result<Pyramid, FusionError> {
    spec.validate()?;
    inputs.check(spec)?;
    weights.validate(spec)?;
    let low = low_gd(inputs, spec, weights)?;
    let out = high_gd(&low, spec, weights)?;
    for (name, m) in &out.levels {
        if m.data().iter().any(|v| !v.is_finite()) {
            return Err(FusionError::NonFinite(format!("output level {name}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::spec::{HighBranchSpec, LevelSpec, LowBranchSpec};

    fn two_level_spec() -> PyramidSpec {
        let lv = |name: &str, stride| LevelSpec {
            name: name.into(),
            channels: 1,
            stride,
        };
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        PyramidSpec {
            input_size: 2,
            levels: vec![lv("p2", 1), lv("p3", 2)],
            low: LowBranchSpec {
                gather: names(&["p2", "p3"]),
                targets: names(&["p2", "p3"]),
                align_to: "p3".into(),
            },
            high: HighBranchSpec {
                gather: names(&["p3"]),
                targets: names(&["p3"]),
                align_to: "p3".into(),
                heads: 1,
                ffn_hidden: 1,
            },
        }
    }

    fn two_level_pyramid() -> Pyramid {
        Pyramid {
            levels: vec![
                ("p2".into(), FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
                ("p3".into(), FeatureMap::new(1, 1, 1, vec![8.0]).unwrap()),
            ],
        }
    }

    #[test]
    fn zero_global_path_halves_local() {
        let spec = two_level_spec();
        let w = FusionWeights::identity_injection(&spec).unwrap();
        let out = low_gd(&two_level_pyramid(), &spec, &w).unwrap();
        assert_eq!(out.get("p2").unwrap().data(), &[0.5, 1.0, 1.5, 2.0]);
        assert_eq!(out.get("p3").unwrap().data(), &[4.0]);
    }

    #[test]
    fn hand_evaluated_low_branch() {
        // fuse = identity, proj = identity, gate = 0: out = local/2 + aligned global
        // p2 global: mean of [1,2,3,4] = 2.5, broadcast to 2x2; p3 global: 8
        let spec = two_level_spec();
        let mut w = FusionWeights::identity_injection(&spec).unwrap();
        w.tensors.get_mut("low.fuse.weight").unwrap().data = vec![1.0, 0.0, 0.0, 1.0];
        for t in ["p2", "p3"] {
            w.tensors.get_mut(&format!("low.inject.{t}.proj.weight")).unwrap().data = vec![1.0];
        }
        let out = low_gd(&two_level_pyramid(), &spec, &w).unwrap();
        assert_eq!(out.get("p2").unwrap().data(), &[3.0, 3.5, 4.0, 4.5]);
        assert_eq!(out.get("p3").unwrap().data(), &[12.0]);
    }

    #[test]
    fn saturated_gate_leaves_projection_only() {
        let spec = two_level_spec();
        let mut w = FusionWeights::identity_injection(&spec).unwrap();
        w.tensors.get_mut("low.inject.p2.gate.bias").unwrap().data = vec![-1e4];
        w.tensors.get_mut("low.inject.p2.proj.bias").unwrap().data = vec![0.75];
        let local = two_level_pyramid().get("p2").unwrap().clone();
        let out = inject(&local, &FeatureMap::filled(1, 1, 1, 5.0), &w, "low.inject.p2").unwrap();
        assert_eq!(out.data(), &[0.75; 4]);
    }

    #[test]
    fn identity_injection_with_zero_global_is_local_scaled() {
        let spec = PyramidSpec::tiny();
        let w = FusionWeights::identity_injection(&spec).unwrap();
        let p = Pyramid::seeded(&spec, 5).unwrap();
        let local = p.get("p3").unwrap();
        let out = inject(local, &FeatureMap::zeros(2, 1, 1), &w, "low.inject.p3").unwrap();
        assert_eq!(out, local.map(|v| v * 0.5));
    }

    #[test]
    fn forward_keeps_shapes_and_repeats() {
        let spec = PyramidSpec::desk();
        let w = FusionWeights::seeded(&spec, 0).unwrap();
        let p = Pyramid::seeded(&spec, 1).unwrap();
        let a = forward(&p, &spec, &w).unwrap();
        a.check(&spec).unwrap();
        assert_eq!(a, forward(&p, &spec, &w).unwrap());
        assert_ne!(a, p);
    }

    #[test]
    fn forward_rejects_mismatched_inputs() {
        let spec = PyramidSpec::tiny();
        let w = FusionWeights::seeded(&spec, 0).unwrap();
        let mut p = Pyramid::seeded(&spec, 1).unwrap();
        p.set("p4", FeatureMap::zeros(4, 3, 4)).unwrap();
        assert!(matches!(forward(&p, &spec, &w), Err(FusionError::Shape { .. })));
        let mut w2 = w.clone();
        w2.tensors.remove("high.attn.o.bias");
        let p = Pyramid::seeded(&spec, 1).unwrap();
        assert!(matches!(forward(&p, &spec, &w2), Err(FusionError::MissingWeight(_))));
    }

    #[test]
    fn tokens_round_trip() {
        let m = FeatureMap::from_fn(3, 2, 4, |c, y, x| (c * 100 + y * 10 + x) as f64);
        let t = to_tokens(&m);
        assert_eq!(t[5], vec![11.0, 111.0, 211.0]);
        assert_eq!(from_tokens(&t, 2, 4).unwrap(), m);
    }
}
