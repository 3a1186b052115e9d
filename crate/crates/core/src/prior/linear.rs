//! Principal-subspace motion prior trained in-process.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::PriorError;
use crate::bodymodel::{MotionSequence, MOTION_DIM};

/// Per-frame mean plus an orthonormal basis of the leading principal
/// directions of the 138-dim frame distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSubspace {
    pub mean: DVector<f64>,
    /// `138 × dim`, orthonormal columns in order of decreasing variance.
    pub basis: DMatrix<f64>,
    /// Variance captured by each basis column.
    pub explained_variance: Vec<f64>,
    /// Largest per-frame reconstruction error (L2 over the 138 values) on the training frames.
    pub training_residual: f64,
}

fn stack_frames(clips: &[MotionSequence]) -> DMatrix<f64> {
    let n: usize = clips.iter().map(|c| c.frames()).sum();
    let mut data = Vec::with_capacity(n * MOTION_DIM);
    for c in clips {
        data.extend_from_slice(c.as_slice());
    }
    DMatrix::from_row_slice(n, MOTION_DIM, &data)
}

/// Fits mean and top-`dim` principal directions to all frames of `clips`.
pub fn train_linear_backend(clips: &[MotionSequence], dim: usize) -> Result<LinearSubspace, PriorError> {
    let x = stack_frames(clips);
    let n = x.nrows();
    if n < dim || dim == 0 || dim > MOTION_DIM {
        return Err(PriorError::InsufficientData { needed: dim.max(1), got: n });
    }
    let mean: DVector<f64> = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..MOTION_DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(MOTION_DIM, dim);
    let mut explained_variance = Vec::with_capacity(dim);
    for (k, &i) in order.iter().take(dim).enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // Fix the sign so the largest-magnitude entry is positive.
        if col[col.iamax()] < 0.0 {
            col.neg_mut();
        }
        basis.set_column(k, &col);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    let mut backend = LinearSubspace { mean, basis, explained_variance, training_residual: 0.0 };
    let recon = backend.reconstruct_rows(&x);
    backend.training_residual = (0..n).map(|t| (x.row(t) - recon.row(t)).norm()).fold(0.0, f64::max);
    Ok(backend)
}

impl LinearSubspace {
    pub fn latent_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `μ = (X − mean)·B` per frame (rows of the input matrix are frames).
    pub fn encode_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= self.mean.transpose();
        }
        c * &self.basis
    }

    /// `X̂ = z·Bᵀ + mean`.
    pub fn decode_rows(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z * self.basis.transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }

    pub fn reconstruct_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.decode_rows(&self.encode_rows(x))
    }

    /// Adjoint of [`decode_rows`](Self::decode_rows): `upstream·B`.
    pub fn decode_gradient_rows(&self, upstream: &DMatrix<f64>) -> DMatrix<f64> {
        upstream * &self.basis
    }

    /// Re-orthonormalizes the basis (used after a reduced-precision load).
    pub(crate) fn orthonormalize(&mut self) {
        let qr = self.basis.clone().qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..q.ncols() {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
            }
        }
        self.basis = q;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clips(rank: usize, seed: u64) -> (Vec<MotionSequence>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = DMatrix::from_fn(MOTION_DIM, rank, |_, _| rng.random_range(-1.0..1.0));
        let offset = DVector::from_fn(MOTION_DIM, |_, _| rng.random_range(-1.0..1.0));
        let clips = (0..4)
            .map(|_| {
                let coeffs = DMatrix::from_fn(50, rank, |_, _| rng.random_range(-1.0..1.0));
                let mut x = coeffs * dirs.transpose();
                for mut row in x.row_iter_mut() {
                    row += offset.transpose();
                }
                MotionSequence::from_matrix(&x).unwrap()
            })
            .collect();
        (clips, dirs)
    }

    #[test]
    fn exact_subspace_is_recovered() {
        let (clips, _) = random_clips(10, 1);
        let b = train_linear_backend(&clips, 32).unwrap();
        assert!(b.training_residual < 1e-9);
        let gram = b.basis.transpose() * &b.basis;
        assert!((gram - DMatrix::identity(32, 32)).abs().max() < 1e-10);
        for w in b.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn canonical_axes_encode_mean_to_zero() {
        let b = LinearSubspace {
            mean: DVector::from_fn(MOTION_DIM, |i, _| i as f64 * 0.01),
            basis: DMatrix::identity(MOTION_DIM, 32),
            explained_variance: vec![1.0; 32],
            training_residual: 0.0,
        };
        let x = DMatrix::from_fn(3, MOTION_DIM, |_, c| b.mean[c]);
        assert_eq!(b.encode_rows(&x), DMatrix::zeros(3, 32));
        assert_eq!(b.decode_rows(&DMatrix::zeros(2, 32)).row(1).transpose(), b.mean);
    }

    #[test]
    fn encode_is_idempotent_on_the_subspace() {
        let (clips, _) = random_clips(40, 2);
        let b = train_linear_backend(&clips, 32).unwrap();
        let x = clips[0].to_matrix();
        let once = b.encode_rows(&x);
        let twice = b.encode_rows(&b.reconstruct_rows(&x));
        assert!((once - twice).abs().max() < 1e-10);
    }

    #[test]
    fn too_few_frames_is_insufficient() {
        let clip = MotionSequence::identity(5);
        assert!(matches!(train_linear_backend(&[clip], 32), Err(PriorError::InsufficientData { .. })));
    }
}
