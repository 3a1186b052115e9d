//! Forward kinematics and its reverse-mode derivative.

use nalgebra::{Matrix3, Vector3};

use super::{BodyError, BodyTemplate, MAX_BETA, NUM_JOINTS, NUM_SHAPE};
use crate::geometry::{so3, Point3};

/// Per-frame body parameters in axis-angle form.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub beta: [f64; NUM_SHAPE],
    /// Local joint rotations; entry 0 is the pelvis local rotation.
    pub pose: [Vector3<f64>; NUM_JOINTS],
    /// Global rotation (axis-angle).
    pub rotation: Vector3<f64>,
    /// Global translation, mm.
    pub translation: Vector3<f64>,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self { beta: [0.0; NUM_SHAPE], pose: [Vector3::zeros(); NUM_JOINTS], rotation: Vector3::zeros(), translation: Vector3::zeros() }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<(), BodyError> {
        if let Some(b) = self.beta.iter().find(|b| !(b.abs() <= MAX_BETA)) {
            return Err(BodyError::InvalidParams(format!("shape coefficient {b} outside [-{MAX_BETA}, {MAX_BETA}]")));
        }
        let angles = self.pose.iter().chain(std::iter::once(&self.rotation));
        if angles.clone().any(|w| !(w.norm() <= std::f64::consts::PI + 1e-9)) {
            return Err(BodyError::InvalidParams("joint rotation angle exceeds pi".into()));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(BodyError::InvalidParams("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn local_matrices(&self) -> [Matrix3<f64>; NUM_JOINTS] {
        self.pose.map(|w| so3::exp(&w))
    }
}

/// Joint positions and global joint orientations of one posed body.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedBody {
    pub positions: Vec<Point3>,
    pub globals: Vec<Matrix3<f64>>,
}

/// Upstream gradients with respect to a [`PosedBody`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosedGrad {
    pub positions: Vec<Vector3<f64>>,
    pub globals: Vec<Matrix3<f64>>,
}

impl PosedGrad {
    pub fn zeros() -> Self {
        Self { positions: vec![Vector3::zeros(); NUM_JOINTS], globals: vec![Matrix3::zeros(); NUM_JOINTS] }
    }
}

/// Gradients of a scalar with respect to the inputs of
/// [`forward_kinematics_matrices`].
#[derive(Debug, Clone, PartialEq)]
pub struct FkGrad {
    pub offsets: Vec<Vector3<f64>>,
    pub locals: Vec<Matrix3<f64>>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl FkGrad {
    /// Chains offset gradients through the template's linear shape model.
    pub fn beta(&self, template: &BodyTemplate) -> [f64; NUM_SHAPE] {
        let mut g = [0.0; NUM_SHAPE];
        for (spec, go) in template.joints.iter().zip(&self.offsets) {
            for (k, d) in spec.shape_dirs.iter().enumerate() {
                g[k] += go.dot(&Vector3::from(*d));
            }
        }
        g
    }
}

/// Root-to-leaf composition: `J_0 = R·o_0 + T`, `G_0 = R·L_0`,
/// `J_j = J_p + G_p·o_j`, `G_j = G_p·L_j`.
pub fn forward_kinematics_matrices(
    template: &BodyTemplate,
    offsets: &[Vector3<f64>],
    locals: &[Matrix3<f64>],
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> PosedBody {
    let mut positions = Vec::with_capacity(NUM_JOINTS);
    let mut globals = Vec::with_capacity(NUM_JOINTS);
    positions.push(rotation * offsets[0] + translation);
    globals.push(rotation * locals[0]);
    for j in 1..NUM_JOINTS {
        let p = template.parent(j).expect("non-root joint has a parent");
        positions.push(positions[p] + globals[p] * offsets[j]);
        globals.push(globals[p] * locals[j]);
    }
    PosedBody { positions, globals }
}

/// Joint positions for axis-angle parameters.
pub fn forward_kinematics(template: &BodyTemplate, params: &BodyParams) -> Vec<Point3> {
    let offsets = template.shaped_offsets(&params.beta);
    let locals = params.local_matrices();
    forward_kinematics_matrices(template, &offsets, &locals, &so3::exp(&params.rotation), &params.translation).positions
}

/// Reverse pass of [`forward_kinematics_matrices`].
pub fn fk_backward(
    template: &BodyTemplate,
    offsets: &[Vector3<f64>],
    locals: &[Matrix3<f64>],
    rotation: &Matrix3<f64>,
    posed: &PosedBody,
    upstream: &PosedGrad,
) -> FkGrad {
    let mut gj = upstream.positions.clone();
    let mut gg = upstream.globals.clone();
    let mut g_off = vec![Vector3::zeros(); NUM_JOINTS];
    let mut g_loc = vec![Matrix3::zeros(); NUM_JOINTS];
    for j in (1..NUM_JOINTS).rev() {
        let p = template.parent(j).expect("non-root joint has a parent");
        let gp = &posed.globals[p];
        let gjj = gj[j];
        gj[p] += gjj;
        g_off[j] = gp.transpose() * gjj;
        g_loc[j] = gp.transpose() * gg[j];
        let contrib = gjj * offsets[j].transpose() + gg[j] * locals[j].transpose();
        gg[p] += contrib;
    }
    g_off[0] = rotation.transpose() * gj[0];
    g_loc[0] = rotation.transpose() * gg[0];
    FkGrad { offsets: g_off, locals: g_loc, rotation: gj[0] * offsets[0].transpose() + gg[0] * locals[0].transpose(), translation: gj[0] }
}
