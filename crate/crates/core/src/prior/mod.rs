//! Latent motion prior: maps `T × 138` motions to `T × 32` latent codes and
//! back, with a linear-subspace backend trainable in-process and a
//! bidirectional-GRU VAE backend loaded from `prior.weights`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::json;
use thiserror::Error;

pub mod archive;
mod gru;
mod linear;
mod penalty;

pub use archive::{architecture_hash, WeightArchive, MAGIC};
pub use gru::{GruArchitecture, GruVae, GRU_BACKEND};
pub use linear::{train_linear_backend, LinearSubspace};
pub use penalty::latent_linear_penalty;

use crate::bodymodel::{BodyError, MotionSequence, MOTION_DIM};

/// Per-frame latent width used throughout.
pub const LATENT_DIM: usize = 32;
pub const LINEAR_BACKEND: &str = "linear";

/// Latent code, one row per frame.
pub type LatentMotion = DMatrix<f64>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PriorError {
    #[error("prior backend is not trained or loaded")]
    UntrainedBackend,
    #[error("malformed weight archive: {0}")]
    MalformedArchive(String),
    #[error("tensor {tensor} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { tensor: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("sequence too short: {0} frames (need at least 3)")]
    TooShort(usize),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default)]
pub enum PriorBackend {
    #[default]
    Untrained,
    Linear(LinearSubspace),
    Gru(Box<GruVae>),
}

impl PriorBackend {
    pub fn latent_dim(&self) -> Result<usize, PriorError> {
        match self {
            Self::Untrained => Err(PriorError::UntrainedBackend),
            Self::Linear(l) => Ok(l.latent_dim()),
            Self::Gru(g) => Ok(g.latent_dim()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Untrained => "untrained",
            Self::Linear(_) => LINEAR_BACKEND,
            Self::Gru(_) => GRU_BACKEND,
        }
    }

    /// `(μ, σ)` for a motion of at least 3 frames.
    pub fn encode(&self, x: &MotionSequence) -> Result<(LatentMotion, LatentMotion), PriorError> {
        self.encode_rows(&x.to_matrix())
    }

    pub fn encode_rows(&self, x: &DMatrix<f64>) -> Result<(LatentMotion, LatentMotion), PriorError> {
        self.latent_dim()?;
        if x.nrows() < 3 {
            return Err(PriorError::TooShort(x.nrows()));
        }
        if x.ncols() != MOTION_DIM {
            return Err(PriorError::DimensionMismatch { what: "motion width", expected: MOTION_DIM, got: x.ncols() });
        }
        Ok(match self {
            Self::Untrained => unreachable!(),
            Self::Linear(l) => {
                let mu = l.encode_rows(x);
                let sigma = DMatrix::from_element(mu.nrows(), mu.ncols(), 1.0);
                (mu, sigma)
            }
            Self::Gru(g) => g.encode_rows(x),
        })
    }

    fn check_latent(&self, z: &DMatrix<f64>) -> Result<(), PriorError> {
        let dim = self.latent_dim()?;
        if z.ncols() != dim {
            return Err(PriorError::DimensionMismatch { what: "latent width", expected: dim, got: z.ncols() });
        }
        Ok(())
    }

    /// Decoded motion matrix (rows are frames).
    pub fn decode_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>, PriorError> {
        self.check_latent(z)?;
        Ok(match self {
            Self::Untrained => unreachable!(),
            Self::Linear(l) => l.decode_rows(z),
            Self::Gru(g) => g.decode_rows(z),
        })
    }

    pub fn decode(&self, z: &LatentMotion) -> Result<MotionSequence, PriorError> {
        Ok(MotionSequence::from_matrix(&self.decode_rows(z)?)?)
    }

    /// Vector-Jacobian product of [`decode_rows`](Self::decode_rows) at `z`.
    pub fn decode_gradient(&self, z: &LatentMotion, upstream: &DMatrix<f64>) -> Result<LatentMotion, PriorError> {
        Ok(self.decode_with_gradient(z, upstream)?.1)
    }

    /// Decoded motion together with the gradient for `upstream`.
    pub fn decode_with_gradient(&self, z: &LatentMotion, upstream: &DMatrix<f64>) -> Result<(DMatrix<f64>, LatentMotion), PriorError> {
        self.check_latent(z)?;
        if upstream.shape() != (z.nrows(), MOTION_DIM) {
            return Err(PriorError::DimensionMismatch { what: "upstream gradient", expected: z.nrows() * MOTION_DIM, got: upstream.len() });
        }
        Ok(match self {
            Self::Untrained => unreachable!(),
            Self::Linear(l) => (l.decode_rows(z), l.decode_gradient_rows(upstream)),
            Self::Gru(g) => g.decode_with_gradient(z, upstream),
        })
    }

    pub fn to_archive(&self) -> Result<WeightArchive, PriorError> {
        match self {
            Self::Untrained => Err(PriorError::UntrainedBackend),
            Self::Gru(g) => Ok(g.archive().clone()),
            Self::Linear(l) => {
                let arch = json!({"kind": "linear_subspace", "input_dim": MOTION_DIM, "latent_dim": l.latent_dim()});
                let mut a = WeightArchive::new(LINEAR_BACKEND, arch);
                let row_major: Vec<f32> =
                    (0..MOTION_DIM).flat_map(|r| (0..l.latent_dim()).map(move |c| (r, c))).map(|(r, c)| l.basis[(r, c)] as f32).collect();
                a.push("linear.mean", vec![MOTION_DIM], l.mean.iter().map(|&v| v as f32).collect());
                a.push("linear.basis", vec![MOTION_DIM, l.latent_dim()], row_major);
                a.push("linear.explained_variance", vec![l.latent_dim()], l.explained_variance.iter().map(|&v| v as f32).collect());
                a.push("linear.training_residual", vec![1], vec![l.training_residual as f32]);
                Ok(a)
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PriorError> {
        self.to_archive()?.write(path)
    }
}

/// Builds a backend from a validated archive.
pub fn load_weights(archive: WeightArchive) -> Result<PriorBackend, PriorError> {
    match archive.backend.as_str() {
        GRU_BACKEND => Ok(PriorBackend::Gru(Box::new(GruVae::from_archive(archive)?))),
        LINEAR_BACKEND => load_linear(&archive),
        other => Err(PriorError::MalformedArchive(format!("unknown backend {other}"))),
    }
}

pub fn load_weights_file(path: &Path) -> Result<PriorBackend, PriorError> {
    load_weights(WeightArchive::read(path)?)
}

fn load_linear(a: &WeightArchive) -> Result<PriorBackend, PriorError> {
    let dim = a
        .architecture
        .get("latent_dim")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| PriorError::MalformedArchive("linear architecture lacks latent_dim".into()))? as usize;
    let expect = |name: &str, shape: Vec<usize>| -> Result<Vec<f64>, PriorError> {
        let t = a.get(name).ok_or_else(|| PriorError::MalformedArchive(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(PriorError::ShapeMismatch { tensor: name.into(), expected: shape, got: t.shape.clone() });
        }
        Ok(t.data.iter().map(|&v| v as f64).collect())
    };
    let mean = expect("linear.mean", vec![MOTION_DIM])?;
    let basis = expect("linear.basis", vec![MOTION_DIM, dim])?;
    let explained_variance = expect("linear.explained_variance", vec![dim])?;
    let residual = expect("linear.training_residual", vec![1])?;
    let mut l = LinearSubspace {
        mean: DVector::from_vec(mean),
        basis: DMatrix::from_row_slice(MOTION_DIM, dim, &basis),
        explained_variance,
        training_residual: residual[0],
    };
    l.orthonormalize();
    Ok(PriorBackend::Linear(l))
}
