use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::FeatureMap;
use crate::error::{FusionError, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub name: String,
    pub channels: usize,
    pub stride: u32,
}

/// Shallow branch: gather, align, fuse with one 1×1 convolution, split, inject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowBranchSpec {
    pub gather: Vec<String>,
    pub targets: Vec<String>,
    pub align_to: String,
}

/// Deep branch: as the shallow one, with attention and a feed-forward block
/// over the aligned spatial positions before the fuse convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighBranchSpec {
    pub gather: Vec<String>,
    pub targets: Vec<String>,
    pub align_to: String,
    pub heads: usize,
    pub ffn_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PyramidSpec {
    pub input_size: u32,
    pub levels: Vec<LevelSpec>,
    pub low: LowBranchSpec,
    pub high: HighBranchSpec,
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl PyramidSpec {
    fn five_levels(input_size: u32, channels: [usize; 5], ffn_hidden: usize) -> Self {
        let levels = ["p2", "p3", "p4", "p5", "p6"]
            .iter()
            .zip(channels)
            .enumerate()
            .map(|(i, (n, c))| LevelSpec {
                name: n.to_string(),
                channels: c,
                stride: 4 << i,
            })
            .collect();
        Self {
            input_size,
            levels,
            low: LowBranchSpec {
                gather: names(&["p2", "p3", "p4", "p5"]),
                targets: names(&["p2", "p3", "p4"]),
                align_to: "p4".into(),
            },
            high: HighBranchSpec {
                gather: names(&["p3", "p4", "p5", "p6"]),
                targets: names(&["p4", "p5", "p6"]),
                align_to: "p5".into(),
                heads: 1,
                ffn_hidden,
            },
        }
    }

    /// Levels p2..p6 (strides 4..64) on a 64×64 input.
    pub fn desk() -> Self {
        Self::five_levels(64, [8, 16, 32, 64, 64], 64)
    }

    /// Same wiring as [`PyramidSpec::desk`] with two to four channels per level.
    pub fn tiny() -> Self {
        Self::five_levels(64, [2, 2, 4, 4, 4], 8)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| IoError::parse(path, e.to_string()))?;
        spec.validate().map_err(|e| IoError::parse(path, e.to_string()))?;
        Ok(spec)
    }

    pub fn level(&self, name: &str) -> Result<&LevelSpec, FusionError> {
        self.levels
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| FusionError::MissingLevel(name.to_string()))
    }

    /// `(height, width)` of a level.
    pub fn level_size(&self, name: &str) -> Result<(usize, usize), FusionError> {
        let s = (self.input_size / self.level(name)?.stride) as usize;
        Ok((s, s))
    }

    pub fn channels_of(&self, names: &[String]) -> Result<Vec<usize>, FusionError> {
        names.iter().map(|n| Ok(self.level(n)?.channels)).collect()
    }

    /// Width of the token vectors in the deep branch.
    pub fn attention_dim(&self) -> Result<usize, FusionError> {
        Ok(self.channels_of(&self.high.gather)?.iter().sum())
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidSpec(m));
        if self.levels.is_empty() {
            return bad("no levels".into());
        }
        if self.input_size == 0 {
            return bad("input_size must be positive".into());
        }
        let mut seen = HashSet::new();
        for (i, l) in self.levels.iter().enumerate() {
            if !seen.insert(l.name.as_str()) {
                return bad(format!("duplicate level {}", l.name));
            }
            if l.channels == 0 || l.stride == 0 {
                return bad(format!("level {}: channels and stride must be positive", l.name));
            }
            if i > 0 && l.stride != 2 * self.levels[i - 1].stride {
                return bad(format!("level {}: stride {} does not double the previous", l.name, l.stride));
            }
            if !self.input_size.is_multiple_of(l.stride) || self.input_size < l.stride {
                return bad(format!("input_size {} not a multiple of stride {}", self.input_size, l.stride));
            }
        }
        let branches = [
            ("low", &self.low.gather, &self.low.targets, &self.low.align_to),
            ("high", &self.high.gather, &self.high.targets, &self.high.align_to),
        ];
        for (branch, gather, targets, align_to) in branches {
            if gather.is_empty() || targets.is_empty() {
                return bad(format!("{branch}: gather and targets must be nonempty"));
            }
            for n in gather.iter().chain(targets).chain(std::iter::once(align_to)) {
                self.level(n)?;
            }
            let uniq: HashSet<_> = targets.iter().collect();
            if uniq.len() != targets.len() {
                return bad(format!("{branch}: duplicate target"));
            }
        }
        if self.high.ffn_hidden == 0 {
            return bad("ffn_hidden must be positive".into());
        }
        let dim = self.attention_dim()?;
        if self.high.heads == 0 || dim % self.high.heads != 0 {
            return Err(FusionError::HeadSplit {
                channels: dim,
                heads: self.high.heads,
            });
        }
        Ok(())
    }
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self::desk()
    }
}

/// Named feature maps in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<(String, FeatureMap)>,
}

impl Pyramid {
    pub fn get(&self, name: &str) -> Result<&FeatureMap, FusionError> {
        self.levels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| FusionError::MissingLevel(name.to_string()))
    }

    pub fn set(&mut self, name: &str, map: FeatureMap) -> Result<(), FusionError> {
        let slot = self
            .levels
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| FusionError::MissingLevel(name.to_string()))?;
        slot.1 = map;
        Ok(())
    }

    /// Every spec level present with shape `[channels, size, size]`.
    pub fn check(&self, spec: &PyramidSpec) -> Result<(), FusionError> {
        for l in &spec.levels {
            let (h, w) = spec.level_size(&l.name)?;
            let m = self.get(&l.name)?;
            if m.shape() != [l.channels, h, w] {
                return Err(FusionError::Shape {
                    what: format!("level {}", l.name),
                    expected: vec![l.channels, h, w],
                    actual: m.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Uniform values in [-1, 1), levels drawn in spec order.
    pub fn seeded(spec: &PyramidSpec, seed: u64) -> Result<Self, FusionError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels = Vec::with_capacity(spec.levels.len());
        for l in &spec.levels {
            let (h, w) = spec.level_size(&l.name)?;
            let m = FeatureMap::from_fn(l.channels, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
            levels.push((l.name.clone(), m));
        }
        Ok(Self { levels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for s in [PyramidSpec::desk(), PyramidSpec::tiny()] {
            s.validate().unwrap();
            assert_eq!(s.level_size("p2").unwrap(), (16, 16));
            assert_eq!(s.level_size("p6").unwrap(), (1, 1));
        }
    }

    #[test]
    fn json_round_trip() {
        let s = PyramidSpec::tiny();
        let back: PyramidSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = PyramidSpec::tiny();
        s.levels[2].stride = 12;
        assert!(s.validate().is_err());

        let mut s = PyramidSpec::tiny();
        s.input_size = 32;
        assert!(s.validate().is_err());

        let mut s = PyramidSpec::tiny();
        s.low.targets.push("p9".into());
        assert!(matches!(s.validate(), Err(FusionError::MissingLevel(_))));

        let mut s = PyramidSpec::tiny();
        s.high.heads = 3;
        assert!(matches!(s.validate(), Err(FusionError::HeadSplit { channels: 14, heads: 3 })));
    }

    #[test]
    fn seeded_pyramid_matches_spec() {
        let s = PyramidSpec::desk();
        let p = Pyramid::seeded(&s, 3).unwrap();
        p.check(&s).unwrap();
        assert_eq!(p, Pyramid::seeded(&s, 3).unwrap());
        assert_ne!(p, Pyramid::seeded(&s, 4).unwrap());
    }
}
