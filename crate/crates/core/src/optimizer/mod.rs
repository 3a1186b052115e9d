//! Joint refinement of body motions and camera extrinsics against filtered 2D
//! poses: robust reprojection, latent motion prior and inter-person
//! penetration, minimized by staged L-BFGS with analytic gradients.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod init;
mod lbfgs;
mod objective;
mod robust;
mod solve;

pub use init::{bone_length_scale, fit_pose, initialize_person};
pub use lbfgs::{minimize, LbfgsOptions, Minimization, Termination};
pub use objective::{CameraState, Evaluation, PersonGrad, PersonState, Problem, SceneGrad, SceneState, TermValues, Terms};
pub use robust::{robust_rho, RobustKernel};
pub use solve::{solve, SolveReport, SolveResult, StageReport};

use crate::bodymodel::{BodyError, NUM_SHAPE};
use crate::geometry::Extrinsics;
use crate::prior::PriorError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OptimizerError {
    #[error("non-finite objective in the {term} term")]
    NonFiniteObjective { term: &'static str },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("invalid scene variables: {0}")]
    InvalidVariables(String),
    #[error("person {track} has {frames} frames, need at least {needed}")]
    InsufficientData { track: usize, frames: usize, needed: usize },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

/// Independently freezable variable blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Extrinsics of every view except view 0.
    Cameras,
    /// Global scale of camera centers about view 0.
    Scale,
    /// Per-frame root orientation.
    Rotation,
    /// Per-frame root translation.
    Translation,
    /// Latent motion code.
    Latent,
    /// Shape coefficients.
    Shape,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::Cameras, Block::Scale, Block::Rotation, Block::Translation, Block::Latent, Block::Shape];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub free: Vec<Block>,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub w_data: f64,
    pub w_z: f64,
    pub w_beta: f64,
    pub w_linear: f64,
    pub w_pen: f64,
    /// Geman-McClure scale, px.
    pub kernel_scale_px: f64,
    /// Stop when the relative objective decrease stays below this.
    pub tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
    /// Surface samples per body for the penetration term.
    pub samples_per_body: usize,
    pub stages: Vec<StageConfig>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            w_data: 1.0,
            w_z: 1e-3,
            w_beta: 1e-2,
            w_linear: 1e-2,
            w_pen: 1.0,
            kernel_scale_px: 100.0,
            tolerance: 1e-9,
            memory: 10,
            samples_per_body: 200,
            stages: vec![
                StageConfig {
                    name: "cameras_and_roots".into(),
                    free: vec![Block::Cameras, Block::Scale, Block::Rotation, Block::Translation],
                    max_iterations: 300,
                },
                StageConfig { name: "all".into(), free: Block::ALL.to_vec(), max_iterations: 500 },
            ],
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let weights = [self.w_data, self.w_z, self.w_beta, self.w_linear, self.w_pen];
        if !weights.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            return Err(OptimizerError::InvalidConfig("term weights must be finite and non-negative".into()));
        }
        if !(self.kernel_scale_px > 0.0 && self.kernel_scale_px.is_finite()) {
            return Err(OptimizerError::InvalidConfig("kernel_scale_px must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(OptimizerError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.memory == 0 {
            return Err(OptimizerError::InvalidConfig("memory must be at least 1".into()));
        }
        Ok(())
    }
}

/// Optimization variables of one person over its frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonVariables {
    pub track_id: usize,
    /// Global index of the first frame.
    pub first_frame: usize,
    pub beta: [f64; NUM_SHAPE],
    /// Latent code, one row per frame.
    pub z: DMatrix<f64>,
    /// Root orientation (axis-angle) per frame.
    pub rotation: Vec<Vector3<f64>>,
    /// Root translation (mm) per frame.
    pub translation: Vec<Vector3<f64>>,
}

impl PersonVariables {
    pub fn frames(&self) -> usize {
        self.z.nrows()
    }

    pub fn covers(&self, frame: usize) -> bool {
        frame >= self.first_frame && frame < self.first_frame + self.frames()
    }
}

/// All optimization variables. Camera `v` maps world points with `cameras[v]`
/// after its center is scaled about view 0's center by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneVariables {
    pub people: Vec<PersonVariables>,
    pub cameras: Vec<Extrinsics>,
    pub scale: f64,
}

impl SceneVariables {
    /// Extrinsics with the scale applied; view 0 is returned untouched.
    pub fn effective_cameras(&self) -> Vec<Extrinsics> {
        let c0 = self.cameras.first().map(|e| e.center()).unwrap_or_default();
        self.cameras
            .iter()
            .enumerate()
            .map(|(v, e)| {
                if v == 0 || self.scale == 1.0 {
                    *e
                } else {
                    let r = e.rotation_matrix();
                    Extrinsics { rotation: e.rotation, translation: e.translation * self.scale - r * c0 * (1.0 - self.scale) }
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidVariables(m));
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        for p in &self.people {
            let t = p.frames();
            if p.rotation.len() != t || p.translation.len() != t {
                return bad(format!(
                    "person {}: {} latent rows but {} rotations and {} translations",
                    p.track_id,
                    t,
                    p.rotation.len(),
                    p.translation.len()
                ));
            }
            if t < 3 {
                return Err(OptimizerError::InsufficientData { track: p.track_id, frames: t, needed: 3 });
            }
        }
        Ok(())
    }
}
