//! Bounding-box similarity measures, detection evaluation, anchor assignment,
//! distribution-shift measurement and a forward reference of
//! gather-and-distribute feature fusion.
//!
//! Boxes are stored in center-size form `(cx, cy, w, h)` in pixels. Corner
//! form appears only at file boundaries.

pub mod assignment;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod shift;

pub use error::{AssignError, EvalError, FusionError, GeometryError, IoError, MetricError, ShiftError};
pub use geometry::{BBox, CornerBox, Detection, GroundTruth, SizeClass, SizeRecord};
pub use metrics::{CombinedParams, MetricKind, MetricParams, NwdParams};
