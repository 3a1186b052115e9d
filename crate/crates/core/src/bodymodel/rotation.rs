//! Continuous 6D rotation representation (first two matrix columns).

use nalgebra::{Matrix3, Vector3};

use super::BodyError;

/// Minimum angle (radians) between the two 6D columns.
pub const MIN_COLUMN_ANGLE: f64 = 1e-6;

/// Gram-Schmidt decode of `(a1, a2)` into a rotation with columns `b1, b2, b3`.
pub fn rot6d_to_matrix(r: &[f64; 6]) -> Result<Matrix3<f64>, BodyError> {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    let (n1, n2) = (a1.norm(), a2.norm());
    if !(n1 > 0.0 && n2 > 0.0) || !(n1.is_finite() && n2.is_finite()) {
        return Err(BodyError::DegenerateRotation);
    }
    let sin = a1.cross(&a2).norm() / (n1 * n2);
    if sin < MIN_COLUMN_ANGLE.sin() {
        return Err(BodyError::DegenerateRotation);
    }
    let b1 = a1 / n1;
    let u = a2 - b1 * b1.dot(&a2);
    let b2 = u / u.norm();
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> [f64; 6] {
    [m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]
}

/// Vector-Jacobian product of [`rot6d_to_matrix`].
pub fn rot6d_vjp(r: &[f64; 6], grad: &Matrix3<f64>) -> [f64; 6] {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    let n1 = a1.norm();
    let b1 = a1 / n1;
    let dot = b1.dot(&a2);
    let u = a2 - b1 * dot;
    let nu = u.norm();
    let b2 = u / nu;

    let gb3: Vector3<f64> = grad.column(2).into();
    // b3 = b1 × b2
    let mut gb1: Vector3<f64> = Vector3::from(grad.column(0)) + b2.cross(&gb3);
    let gb2: Vector3<f64> = Vector3::from(grad.column(1)) + gb3.cross(&b1);
    // b2 = u / |u|
    let gu = (gb2 - b2 * b2.dot(&gb2)) / nu;
    // u = a2 - (b1·a2) b1
    let ga2 = gu - b1 * b1.dot(&gu);
    gb1 += -gu * dot - a2 * b1.dot(&gu);
    // b1 = a1 / |a1|
    let ga1 = (gb1 - b1 * b1.dot(&gb1)) / n1;
    [ga1.x, ga1.y, ga1.z, ga2.x, ga2.y, ga2.z]
}
