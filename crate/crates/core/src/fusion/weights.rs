//! Parameter naming:
//!
//! - `low.fuse.{weight,bias}`: `[Σ target channels, Σ gather channels, 1, 1]`
//! - `{low,high}.inject.<level>.{embed,gate,proj}.{weight,bias}`: `[C, C, 1, 1]`
//! - `{low,high}.inject.<level>.repconv.{weight,bias}`: `[C, C, 3, 3]`
//! - `high.attn.{q,k,v,o}.{weight,bias}`: `[D, D]`, D = Σ deep gather channels
//! - `high.ffn.fc1.{weight,bias}`: `[hidden, D]`; `high.ffn.fc2`: `[D, hidden]`
//! - `high.fuse.{weight,bias}`: `[Σ target channels, D, 1, 1]`
//!
//! Biases are rank 1 with the leading dimension of their weight.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::PyramidSpec;
use super::tensor::Tensor;
use crate::error::{FusionError, IoError};
use crate::io::{read_tensor_file, write_tensor_file};

pub const INJECT_CONVS: [&str; 3] = ["embed", "gate", "proj"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionWeights {
    pub tensors: BTreeMap<String, Tensor>,
}

fn add_pair(out: &mut BTreeMap<String, Vec<usize>>, prefix: &str, shape: Vec<usize>) {
    out.insert(format!("{prefix}.bias"), vec![shape[0]]);
    out.insert(format!("{prefix}.weight"), shape);
}

impl FusionWeights {
    pub fn expected_shapes(spec: &PyramidSpec) -> Result<BTreeMap<String, Vec<usize>>, FusionError> {
        spec.validate()?;
        let mut out = BTreeMap::new();
        let low_in: usize = spec.channels_of(&spec.low.gather)?.iter().sum();
        let low_out: usize = spec.channels_of(&spec.low.targets)?.iter().sum();
        add_pair(&mut out, "low.fuse", vec![low_out, low_in, 1, 1]);

        let d = spec.attention_dim()?;
        for p in ["q", "k", "v", "o"] {
            add_pair(&mut out, &format!("high.attn.{p}"), vec![d, d]);
        }
        add_pair(&mut out, "high.ffn.fc1", vec![spec.high.ffn_hidden, d]);
        add_pair(&mut out, "high.ffn.fc2", vec![d, spec.high.ffn_hidden]);
        let high_out: usize = spec.channels_of(&spec.high.targets)?.iter().sum();
        add_pair(&mut out, "high.fuse", vec![high_out, d, 1, 1]);

        for (phase, targets) in [("low", &spec.low.targets), ("high", &spec.high.targets)] {
            for t in targets {
                let c = spec.level(t)?.channels;
                for conv in INJECT_CONVS {
                    add_pair(&mut out, &format!("{phase}.inject.{t}.{conv}"), vec![c, c, 1, 1]);
                }
                add_pair(&mut out, &format!("{phase}.inject.{t}.repconv"), vec![c, c, 3, 3]);
            }
        }
        Ok(out)
    }

    /// Exactly the expected names, with matching shapes and finite values.
    pub fn validate(&self, spec: &PyramidSpec) -> Result<(), FusionError> {
        let expected = Self::expected_shapes(spec)?;
        for (name, shape) in &expected {
            let t = self.tensors.get(name).ok_or_else(|| FusionError::MissingWeight(name.clone()))?;
            if &t.shape != shape {
                return Err(FusionError::Shape {
                    what: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape.clone(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(FusionError::NonFinite(name.clone()));
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.contains_key(*k)) {
            return Err(FusionError::InvalidSpec(format!("unexpected weight tensor {extra}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, FusionError> {
        self.tensors.get(name).ok_or_else(|| FusionError::MissingWeight(name.to_string()))
    }

    pub fn zeros(spec: &PyramidSpec) -> Result<Self, FusionError> {
        let tensors = Self::expected_shapes(spec)?
            .into_iter()
            .map(|(n, s)| (n, Tensor::zeros(s)))
            .collect();
        Ok(Self { tensors })
    }

    /// Zero everywhere except identity `embed` and `repconv` kernels, so every
    /// injection returns its local input scaled by the gate, sigmoid(0) = 0.5.
    pub fn identity_injection(spec: &PyramidSpec) -> Result<Self, FusionError> {
        let mut w = Self::zeros(spec)?;
        for (name, t) in w.tensors.iter_mut() {
            if name.ends_with(".embed.weight") || name.ends_with(".repconv.weight") {
                let (c, k) = (t.shape[0], t.shape[2]);
                for i in 0..c {
                    t.data[((i * c + i) * k + k / 2) * k + k / 2] = 1.0;
                }
            }
        }
        Ok(w)
    }

    /// Uniform in ±1/√fan_in, drawn in name order. Values are rounded to f32
    /// so that a save/load cycle is lossless.
    pub fn seeded(spec: &PyramidSpec, seed: u64) -> Result<Self, FusionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = Self::expected_shapes(spec)?;
        let mut tensors = BTreeMap::new();
        for (name, shape) in &shapes {
            let weight_shape = match name.strip_suffix(".bias") {
                Some(stem) => &shapes[&format!("{stem}.weight")],
                None => shape,
            };
            let fan_in: usize = weight_shape[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..bound) as f32 as f64).collect();
            tensors.insert(name.clone(), Tensor { shape: shape.clone(), data });
        }
        Ok(Self { tensors })
    }

    pub fn read(path: &Path, spec: &PyramidSpec) -> Result<Self, IoError> {
        let tensors = read_tensor_file(path)?;
        let w = Self { tensors };
        w.validate(spec).map_err(|e| IoError::parse(path, e.to_string()))?;
        Ok(w)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_tensor_file(path, &self.tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_weights_validate_and_repeat() {
        let s = PyramidSpec::tiny();
        let w = FusionWeights::seeded(&s, 1).unwrap();
        w.validate(&s).unwrap();
        assert_eq!(w, FusionWeights::seeded(&s, 1).unwrap());
        assert_ne!(w, FusionWeights::seeded(&s, 2).unwrap());
        let fc1 = w.get("high.ffn.fc1.weight").unwrap();
        let bound = 1.0 / (fc1.shape[1] as f64).sqrt();
        // f32 rounding may step just past the bound
        assert!(fc1.data.iter().all(|v| v.abs() <= bound * (1.0 + 1e-7)));
        assert!(w.tensors.values().flat_map(|t| &t.data).all(|&v| v as f32 as f64 == v));
    }

    #[test]
    fn expected_shape_examples() {
        let s = PyramidSpec::tiny();
        let e = FusionWeights::expected_shapes(&s).unwrap();
        // gather p2..p5 = 2+2+4+4, targets p2..p4 = 2+2+4
        assert_eq!(e["low.fuse.weight"], vec![8, 12, 1, 1]);
        assert_eq!(e["high.attn.q.weight"], vec![14, 14]);
        assert_eq!(e["high.inject.p6.repconv.weight"], vec![4, 4, 3, 3]);
        assert_eq!(e["high.fuse.bias"], vec![12]);
    }

    #[test]
    fn validate_reports_problems() {
        let s = PyramidSpec::tiny();
        let mut w = FusionWeights::zeros(&s).unwrap();
        w.tensors.remove("low.fuse.bias");
        assert!(matches!(w.validate(&s), Err(FusionError::MissingWeight(_))));

        let mut w = FusionWeights::zeros(&s).unwrap();
        w.tensors.get_mut("high.attn.k.weight").unwrap().shape = vec![7, 28];
        assert!(matches!(w.validate(&s), Err(FusionError::Shape { .. })));

        let mut w = FusionWeights::zeros(&s).unwrap();
        w.tensors.insert("stray".into(), Tensor::zeros(vec![1]));
        assert!(w.validate(&s).is_err());
    }

    #[test]
    fn file_round_trip() {
        let s = PyramidSpec::tiny();
        let w = FusionWeights::seeded(&s, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        w.write(&path).unwrap();
        assert_eq!(FusionWeights::read(&path, &s).unwrap(), w);
    }
}
