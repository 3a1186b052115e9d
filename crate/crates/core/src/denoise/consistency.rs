//! Per-joint physical (previous-position) and geometric (coplanarity) costs
//! between views.

use nalgebra::DMatrix;

use super::DenoiseError;
use crate::geometry::{point_ray_distance, ray_coplanarity, PlueckerRay, Point3};

/// Pairwise view costs for one joint of one person at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyMatrices {
    /// `P_ij = L_p^i + L_p^j` (mm); absent when no previous position is known.
    pub physical: Option<DMatrix<f64>>,
    /// `G_ij = |n_i·l_j + n_j·l_i|` (mm).
    pub geometric: DMatrix<f64>,
    /// Views that observed the joint.
    pub valid: Vec<bool>,
}

impl ConsistencyMatrices {
    pub fn views(&self) -> usize {
        self.valid.len()
    }
}

/// Distance of the previous joint position to each view's ray.
pub fn physical_cost(x_prev: Option<&Point3>, rays: &[Option<PlueckerRay>]) -> Result<Vec<Option<f64>>, DenoiseError> {
    let x = x_prev.ok_or(DenoiseError::NoTrajectory)?;
    Ok(rays.iter().map(|r| r.as_ref().map(|r| point_ray_distance(x, r))).collect())
}

/// Builds `P` and `G` over all views; entries touching an invalid view and
/// the diagonal are zero.
pub fn build_matrices(rays: &[Option<PlueckerRay>], x_prev: Option<&Point3>) -> Result<ConsistencyMatrices, DenoiseError> {
    let v = rays.len();
    let valid: Vec<bool> = rays.iter().map(Option::is_some).collect();
    let count = valid.iter().filter(|b| **b).count();
    if count < 2 {
        return Err(DenoiseError::TooFewViews(count));
    }
    let mut g = DMatrix::zeros(v, v);
    for i in 0..v {
        for j in i + 1..v {
            if let (Some(a), Some(b)) = (&rays[i], &rays[j]) {
                let c = ray_coplanarity(a, b).abs();
                g[(i, j)] = c;
                g[(j, i)] = c;
            }
        }
    }
    let physical = match x_prev {
        Some(_) => {
            let lp = physical_cost(x_prev, rays)?;
            let mut p = DMatrix::zeros(v, v);
            for i in 0..v {
                for j in 0..v {
                    if let (true, Some(a), Some(b)) = (i != j, lp[i], lp[j]) {
                        p[(i, j)] = a + b;
                    }
                }
            }
            Some(p)
        }
        None => None,
    };
    Ok(ConsistencyMatrices { physical, geometric: g, valid })
}
