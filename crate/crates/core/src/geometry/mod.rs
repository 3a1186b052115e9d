//! Projective camera model, Plücker-ray algebra, triangulation and epipolar
//! extrinsic initialization.
//!
//! Units are millimeters in world space and pixels in image space. View 0
//! defines the world frame when cameras come from [`init_all_cameras`].

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

mod camera;
pub mod epipolar;
pub mod init;
mod plucker;
pub mod so3;

pub use camera::{pixel_to_ray, project, Camera, CameraRecord, Extrinsics, Intrinsics, MIN_DEPTH_MM};
pub use epipolar::{decompose_to_extrinsics, estimate_fundamental, FundamentalEstimate, RansacConfig, RelativePose};
pub use init::{init_all_cameras, resect, triangulate_records, CameraInit, InitConfig, ViewInitReport};
pub use plucker::{point_ray_distance, ray_coplanarity, triangulate, PlueckerRay};

/// World-frame position in millimeters.
pub type Point3 = Vector3<f64>;
/// Image position in pixels.
pub type Pixel = Vector2<f64>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (camera-frame depth {depth} mm)")]
    PointBehindCamera { depth: f64 },
    #[error("invalid intrinsics: focal lengths must be positive and finite (fx={fx}, fy={fy})")]
    InvalidIntrinsics { fx: f64, fy: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("need at least 2 rays to triangulate, got {0}")]
    TooFewRays(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("no consensus: best inlier ratio {ratio:.3} below required {required:.3}")]
    NoConsensus { ratio: f64, required: f64 },
    #[error("cheirality ambiguity: best candidate {best} vs second {second} points in front")]
    CheiralityAmbiguity { best: usize, second: usize },
    #[error("calibration needs at least 2 views, got {0}")]
    TooFewViews(usize),
}
