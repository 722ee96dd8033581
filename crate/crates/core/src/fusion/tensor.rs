use serde::{Deserialize, Serialize};

use crate::error::FusionError;

/// Dense `channels x height x width` array, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if channels == 0 || height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(FusionError::Shape {
                what: "feature map".into(),
                expected: vec![channels, height, width],
                actual: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::NonFinite("feature map".into()));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, v: f64) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty feature map");
        Self {
            channels,
            height,
            width,
            data: vec![v; channels * height * width],
        }
    }

    /// Builds a map by evaluating `f(c, y, x)` at every position.
    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Concatenates maps of equal spatial size along channels.
    pub fn concat(maps: &[FeatureMap]) -> Result<Self, FusionError> {
        let first = maps.first().ok_or_else(|| FusionError::InvalidSpec("nothing to concatenate".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for m in maps {
            if (m.height, m.width) != (h, w) {
                return Err(FusionError::Shape {
                    what: "concatenated map".into(),
                    expected: vec![m.channels, h, w],
                    actual: m.shape().to_vec(),
                });
            }
            channels += m.channels;
            data.extend_from_slice(&m.data);
        }
        Ok(Self { channels, height: h, width: w, data })
    }

    /// Splits along channels into consecutive chunks of the given sizes.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<FeatureMap>, FusionError> {
        let total: usize = sizes.iter().sum();
        if total != self.channels || sizes.contains(&0) {
            return Err(FusionError::Shape {
                what: "channel split".into(),
                expected: vec![self.channels],
                actual: sizes.to_vec(),
            });
        }
        let plane = self.height * self.width;
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&n| {
                let m = FeatureMap {
                    channels: n,
                    height: self.height,
                    width: self.width,
                    data: self.data[start * plane..(start + n) * plane].to_vec(),
                };
                start += n;
                m
            })
            .collect())
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn zip_with(&self, other: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> Result<Self, FusionError> {
        if self.shape() != other.shape() {
            return Err(FusionError::Shape {
                what: "elementwise operand".into(),
                expected: self.shape().to_vec(),
                actual: other.shape().to_vec(),
            });
        }
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..*self
        })
    }
}

/// Named parameter tensor of arbitrary rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, FusionError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(FusionError::Shape {
                what: "tensor".into(),
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn from_map(m: &FeatureMap) -> Self {
        Self {
            shape: m.shape().to_vec(),
            data: m.data.clone(),
        }
    }

    pub fn to_map(&self) -> Result<FeatureMap, FusionError> {
        match self.shape[..] {
            [c, h, w] => FeatureMap::new(c, h, w, self.data.clone()),
            _ => Err(FusionError::Shape {
                what: "feature map tensor".into(),
                expected: vec![0, 0, 0],
                actual: self.shape.clone(),
            }),
        }
    }
}
