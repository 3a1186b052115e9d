//! Axis-angle helpers on SO(3) with the derivatives the optimizer needs.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Below this angle the closed-form exp-map derivative loses precision and
/// a second-order series is used instead.
const SMALL_ANGLE: f64 = 1e-5;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues map from an axis-angle vector to a rotation matrix.
pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

/// Inverse of [`exp`], returning the canonical vector with angle in `[0, π]`.
pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    let v = 0.5 * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let s = v.norm();
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = s.atan2(c);
    if s < 1e-12 && c > 0.0 {
        return v;
    }
    if c > -0.99 {
        return v * (angle / s);
    }
    // Near π the antisymmetric part vanishes; read the axis off R + Rᵀ.
    let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let k = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).unwrap_or(0);
    let mut axis = b.column(k).into_owned().normalize();
    if axis.dot(&v) < 0.0 {
        axis.neg_mut();
    }
    axis * angle
}

/// Re-projects a near-rotation onto SO(3) (nearest orthonormal matrix, det +1).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Partial derivatives `∂R/∂w_k` of [`exp`] for k = 0, 1, 2.
pub fn exp_derivatives(w: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta2 = w.norm_squared();
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    if theta2.sqrt() < SMALL_ANGLE {
        let wx = skew(w);
        return basis.map(|e| {
            let ex = skew(&e);
            ex + 0.5 * (ex * wx + wx * ex)
        });
    }
    let r = exp(w);
    let wx = skew(w);
    let i_minus_r = Matrix3::identity() - r;
    let mut out = [Matrix3::zeros(); 3];
    for (k, e) in basis.iter().enumerate() {
        let v = w.cross(&(i_minus_r * e));
        out[k] = (w[k] * wx + skew(&v)) * r / theta2;
    }
    out
}

/// Vector-Jacobian product of [`exp`]: maps `∂L/∂R` to `∂L/∂w`.
pub fn exp_vjp(w: &Vector3<f64>, grad_r: &Matrix3<f64>) -> Vector3<f64> {
    let d = exp_derivatives(w);
    Vector3::new(grad_r.component_mul(&d[0]).sum(), grad_r.component_mul(&d[1]).sum(), grad_r.component_mul(&d[2]).sum())
}

/// Geodesic distance between two rotations, in radians.
pub fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let m = a * b.transpose();
    let c = (m.trace() - 1.0) * 0.5;
    let s = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    s.atan2(c)
}

/// Rotation about a unit axis by `angle` radians.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    exp(&(axis.normalize() * angle))
}
