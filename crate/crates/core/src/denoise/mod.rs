//! Physics-geometry consistent filtering of multi-view 2D detections.
//!
//! For every person, frame and joint the views are compared pairwise: the
//! physical cost measures how far each view's ray passes from the joint's
//! previous 3D position, the geometric cost is the coplanarity of two rays.
//! Costs become affinities, a consistent view subset is selected per joint and
//! a weighted vote fixes the view set of the whole person for the frame. The
//! kept detections are triangulated into the trajectory used at the next frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod consistency;
mod selection;
mod sequence;

pub use consistency::{build_matrices, physical_cost, ConsistencyMatrices};
pub use selection::{
    affinity, select_exhaustive, select_from_affinity, select_greedy, select_views, selection_objective, SelectionObjective, ViewSelection,
};
pub use sequence::{denoise_sequence, DenoiseOutput, FrameDecision, TrajectoryState, TORSO_JOINTS};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DenoiseError {
    #[error("no valid previous joint position")]
    NoTrajectory,
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("no view pair exceeds the affinity floor")]
    EmptySelection,
    #[error("invalid denoise config: {0}")]
    InvalidConfig(String),
    #[error("record references view {view} but only {cameras} cameras are given")]
    UnknownView { view: usize, cameras: usize },
    #[error("record (view {view}, frame {frame}, track {track}) has {got} joints, expected {expected}")]
    JointCountMismatch { view: usize, frame: usize, track: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub c_g: f64,
    pub c_p: f64,
    /// mm
    pub affinity_sigma_p: f64,
    /// mm
    pub affinity_sigma_g: f64,
    /// Frames a joint position stays usable without a fresh triangulation.
    pub max_gap: usize,
    /// Pair affinity a view must reach on average to join the selection.
    pub inclusion_threshold: f64,
    /// Below this best-pair affinity the selection is empty.
    pub affinity_floor: f64,
    /// Vote weight of torso joints relative to limbs.
    pub torso_weight: f64,
    /// Largest valid view count solved by exhaustive enumeration.
    pub exact_limit: usize,
    pub objective: SelectionObjective,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            c_g: 0.7,
            c_p: 0.3,
            affinity_sigma_p: 100.0,
            affinity_sigma_g: 50.0,
            max_gap: 10,
            inclusion_threshold: 0.5,
            affinity_floor: 0.1,
            torso_weight: 2.0,
            exact_limit: 12,
            objective: SelectionObjective::ThresholdedSum,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        let bad = |m: &str| Err(DenoiseError::InvalidConfig(m.to_string()));
        if !(self.c_g >= 0.0 && self.c_p >= 0.0 && (self.c_g + self.c_p - 1.0).abs() < 1e-9) {
            return bad("c_g and c_p must be non-negative and sum to 1");
        }
        if !(self.affinity_sigma_p > 0.0 && self.affinity_sigma_g > 0.0) {
            return bad("affinity scales must be positive");
        }
        if !(0.0..=1.0).contains(&self.inclusion_threshold) || !(0.0..=1.0).contains(&self.affinity_floor) {
            return bad("inclusion_threshold and affinity_floor must lie in [0, 1]");
        }
        if !(self.torso_weight > 0.0) {
            return bad("torso_weight must be positive");
        }
        if self.exact_limit > 20 {
            return bad("exact_limit above 20 is intractable");
        }
        Ok(())
    }
}
