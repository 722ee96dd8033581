//! Forward-only reference of a five-level feature pyramid with
//! gather-and-distribute fusion. Weights are supplied or seeded; nothing is
//! trained.

pub mod attention;
pub mod gd;
pub mod ops;
pub mod spec;
pub mod tensor;
pub mod weights;

pub use attention::{multi_head_attention, softmax, transformer_block, AttentionOutput};
pub use gd::{forward, high_gd, inject, low_gd};
pub use ops::{adaptive_avg_pool, align, bilinear_resize, conv2d, resize_to, sigmoid};
pub use spec::{HighBranchSpec, LevelSpec, LowBranchSpec, Pyramid, PyramidSpec};
pub use tensor::{FeatureMap, Tensor};
pub use weights::FusionWeights;
