//! Rigging toolkit: skeleton codecs, voxel encodings, skinning and rig metrics.

pub mod codec;
pub mod error;
pub mod geometry;
pub mod io;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod skinning;
pub mod synth;
pub mod voxel;

pub use error::{ParseError, Result, RigError};
pub use geometry::Vec3;
pub use model::{
    Joint, Mesh, NormalizationRecord, RiggedAsset, Skeleton, SkinningMatrix,
};
