//! Multi-person motion capture and extrinsic calibration from tracked 2D
//! poses observed by cameras with known intrinsics.

// Range checks are written `!(x <= limit)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod bodymodel;
pub mod denoise;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod pipeline;
pub mod pose2d;
pub mod prior;
pub mod synth;
