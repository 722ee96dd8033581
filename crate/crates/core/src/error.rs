use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{field} is not finite: {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("non-positive extent {field} = {value}")]
    NonPositiveExtent { field: &'static str, value: f64 },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("invalid image size {width}x{height}")]
    InvalidImageSize { width: f64, height: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{kind} is not differentiable here: {reason}")]
    NonDifferentiable { kind: MetricKind, reason: &'static str },
    #[error("invalid parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("{0} is a loss, not a similarity")]
    NotASimilarity(MetricKind),
}

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("no ground-truth boxes given")]
    EmptyGroundTruth,
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid anchor grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("class id {class_id} not in class table of {classes} entries")]
    UnknownClass { class_id: usize, classes: usize },
    #[error("threshold {name} = {value} outside [0, 1]")]
    InvalidThreshold { name: &'static str, value: f64 },
}

#[derive(Debug, Error)]
pub enum ShiftError {
    #[error("bin count mismatch: {0} vs {1}")]
    BinMismatch(usize, usize),
    #[error("no images given")]
    NoImages,
    #[error("histogram is empty or has no mass")]
    EmptyHistogram,
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("curve for {metric} size {box_size} has {samples} samples, need at least 2")]
    ShortCurve {
        metric: MetricKind,
        box_size: f64,
        samples: usize,
    },
    #[error("invalid sweep config: {0}")]
    InvalidSweep(String),
    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape mismatch for {what}: expected {expected:?}, got {actual:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("missing weight tensor {0}")]
    MissingWeight(String),
    #[error("channels {channels} not divisible by {heads} heads")]
    HeadSplit { channels: usize, heads: usize },
    #[error("invalid pyramid spec: {0}")]
    InvalidSpec(String),
    #[error("missing pyramid level {0}")]
    MissingLevel(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Errors from reading or writing files on disk.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        IoError::Parse { path: path.into(), message: message.into() }
    }

    pub(crate) fn record(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        IoError::Record { path: path.into(), line, message: message.into() }
    }
}
