//! Dense per-pixel image descriptors from a dilated convolutional trunk and a
//! pooled context pyramid, with the pieces needed to train, match and
//! verify them: a small reverse-mode tape, triplet training with Adam,
//! synthetic homography pairs, nearest-neighbour matching and RANSAC.

mod error;

pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod linalg;
pub mod matcher;
pub mod model;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{DecodeError, Error, Result};
pub use geometry::{ModelKind, PlanarModel, PointPair};
pub use matcher::{Keypoint, Match};
pub use model::{describe, init_weights, DescriptorField, Profile, RdnConfig, RdnWeights};
pub use tensor::Tensor;
