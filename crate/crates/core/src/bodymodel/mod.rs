//! Simplified SMPL-topology body: shape-scaled skeleton, forward kinematics
//! over 6D joint rotations, and a capsule surface for contact tests.

use thiserror::Error;

mod capsule;
mod kinematics;
mod motion;
mod rotation;
mod template;

pub use capsule::{
    capsule_sdf, density_for_count, sample_descriptors, segment_distance, surface_area, surface_points, surface_samples, PersonSurface,
    SampleDescriptor, SdfHit,
};
pub use kinematics::{fk_backward, forward_kinematics, forward_kinematics_matrices, BodyParams, FkGrad, PosedBody, PosedGrad};
pub use motion::{params_to_sequence, sequence_to_params, MotionClip, MotionSequence};
pub use rotation::{matrix_to_rot6d, rot6d_to_matrix, rot6d_vjp, MIN_COLUMN_ANGLE};
pub use template::{BodyTemplate, CapsuleSpec, JointSpec};

pub const NUM_JOINTS: usize = 24;
pub const NUM_ARTICULATED: usize = 23;
pub const NUM_SHAPE: usize = 10;
/// Width of one motion row: 23 articulated joints × 6D rotation.
pub const MOTION_DIM: usize = NUM_ARTICULATED * 6;
/// Largest admissible magnitude of a shape coefficient.
pub const MAX_BETA: f64 = 5.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BodyError {
    #[error("6D rotation columns are zero or parallel")]
    DegenerateRotation,
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid body template: {0}")]
    InvalidTemplate(String),
    #[error("invalid body parameters: {0}")]
    InvalidParams(String),
}
