//! Objective `L = L_data + L_prior + L_pen` and its reverse pass.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{OptimizerConfig, OptimizerError, RobustKernel, SceneVariables};
use crate::bodymodel::{
    density_for_count, fk_backward, forward_kinematics_matrices, rot6d_to_matrix, rot6d_vjp, sample_descriptors, BodyTemplate,
    PersonSurface, PosedBody, PosedGrad, SampleDescriptor, MOTION_DIM, NUM_ARTICULATED, NUM_JOINTS, NUM_SHAPE,
};
use crate::geometry::{so3, Intrinsics, Pixel, Point3, MIN_DEPTH_MM};
use crate::pose2d::TrackedPose2D;
use crate::prior::{latent_linear_penalty, PriorBackend};

/// Rotation-matrix form of one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonState {
    pub first_frame: usize,
    pub beta: [f64; NUM_SHAPE],
    pub z: DMatrix<f64>,
    pub rotations: Vec<Matrix3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

impl PersonState {
    fn covers(&self, frame: usize) -> bool {
        frame >= self.first_frame && frame < self.first_frame + self.z.nrows()
    }
}

/// Variables with rotations as matrices, the form the objective is evaluated in.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub cameras: Vec<CameraState>,
    pub scale: f64,
    pub people: Vec<PersonState>,
}

impl SceneState {
    pub fn from_variables(v: &SceneVariables) -> Self {
        Self {
            cameras: v.cameras.iter().map(|e| CameraState { rotation: e.rotation_matrix(), translation: e.translation }).collect(),
            scale: v.scale,
            people: v
                .people
                .iter()
                .map(|p| PersonState {
                    first_frame: p.first_frame,
                    beta: p.beta,
                    z: p.z.clone(),
                    rotations: p.rotation.iter().map(so3::exp).collect(),
                    translations: p.translation.clone(),
                })
                .collect(),
        }
    }
}

/// Gradients with respect to a [`SceneState`]; rotation entries are `∂L/∂R`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrad {
    pub cameras: Vec<CameraState>,
    pub scale: f64,
    pub people: Vec<PersonGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonGrad {
    pub beta: [f64; NUM_SHAPE],
    pub z: DMatrix<f64>,
    pub rotations: Vec<Matrix3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

/// Weighted value of every term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermValues {
    pub data: f64,
    pub prior_z: f64,
    pub prior_beta: f64,
    pub prior_linear: f64,
    pub penetration: f64,
}

impl TermValues {
    pub fn total(&self) -> f64 {
        self.data + self.prior_z + self.prior_beta + self.prior_linear + self.penetration
    }
}

/// Which terms to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub data: bool,
    pub prior: bool,
    pub penetration: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { data: true, prior: true, penetration: true };
    pub const DATA: Terms = Terms { data: true, prior: false, penetration: false };
    pub const PRIOR: Terms = Terms { data: false, prior: true, penetration: false };
    pub const PENETRATION: Terms = Terms { data: false, prior: false, penetration: true };
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub terms: TermValues,
    pub grad: SceneGrad,
}

impl Evaluation {
    pub fn value(&self) -> f64 {
        self.terms.total()
    }
}

#[derive(Debug, Clone)]
struct Observation {
    view: usize,
    /// `(joint, pixel, confidence)` for joints with positive confidence.
    joints: Vec<(usize, Pixel, f64)>,
}

/// Fixed inputs of the objective: template, prior, intrinsics and the
/// detections assigned to each person.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub template: &'a BodyTemplate,
    pub prior: &'a PriorBackend,
    pub intrinsics: Vec<Intrinsics>,
    /// `obs[n][t]`: detections of person `n` at its local frame `t`.
    obs: Vec<Vec<Vec<Observation>>>,
    descriptors: Vec<SampleDescriptor>,
    kernel: RobustKernel,
    w_data: f64,
    w_z: f64,
    w_beta: f64,
    w_linear: f64,
    w_pen: f64,
}

struct Decoded {
    rows: DMatrix<f64>,
    locals: Vec<[Matrix3<f64>; NUM_JOINTS]>,
    offsets: Vec<Vector3<f64>>,
}

struct PersonFrameGrad {
    person: usize,
    t: usize,
    row: Vec<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    beta: [f64; NUM_SHAPE],
}

struct FrameOut {
    data: f64,
    pen: f64,
    people: Vec<PersonFrameGrad>,
    cameras: Vec<(usize, Matrix3<f64>, Vector3<f64>)>,
}

impl<'a> Problem<'a> {
    /// Detections whose track is not among `vars.people` or whose frame lies
    /// outside that person's range are ignored.
    pub fn new(
        template: &'a BodyTemplate,
        prior: &'a PriorBackend,
        intrinsics: Vec<Intrinsics>,
        vars: &SceneVariables,
        detections: &[TrackedPose2D],
        cfg: &OptimizerConfig,
    ) -> Result<Self, OptimizerError> {
        cfg.validate()?;
        vars.validate()?;
        if intrinsics.len() != vars.cameras.len() {
            return Err(OptimizerError::InvalidVariables(format!("{} intrinsics for {} cameras", intrinsics.len(), vars.cameras.len())));
        }
        let mut obs: Vec<Vec<Vec<Observation>>> = vars.people.iter().map(|p| vec![Vec::new(); p.frames()]).collect();
        for r in detections {
            let Some(n) = vars.people.iter().position(|p| p.track_id == r.track_id && p.covers(r.frame)) else { continue };
            if r.view_id >= intrinsics.len() {
                return Err(OptimizerError::InvalidVariables(format!("detection references view {}", r.view_id)));
            }
            let joints: Vec<(usize, Pixel, f64)> = r
                .joints
                .iter()
                .zip(&r.confidence)
                .enumerate()
                .take(NUM_JOINTS)
                .filter(|(_, (_, c))| **c > 0.0)
                .map(|(j, (p, c))| (j, *p, *c))
                .collect();
            obs[n][r.frame - vars.people[n].first_frame].push(Observation { view: r.view_id, joints });
        }
        for person in &mut obs {
            for frame in person.iter_mut() {
                frame.sort_by_key(|o| o.view);
            }
        }
        Ok(Self {
            template,
            prior,
            intrinsics,
            obs,
            descriptors: sample_descriptors(template, density_for_count(template, cfg.samples_per_body)),
            kernel: RobustKernel { scale: cfg.kernel_scale_px },
            w_data: cfg.w_data,
            w_z: cfg.w_z,
            w_beta: cfg.w_beta,
            w_linear: cfg.w_linear,
            w_pen: cfg.w_pen,
        })
    }

    pub fn detection_count(&self) -> usize {
        self.obs.iter().flatten().flatten().map(|o| o.joints.len()).sum()
    }

    /// Camera `v` after applying the scale about view 0's center.
    fn effective_camera(state: &SceneState, v: usize, c0: &Vector3<f64>) -> CameraState {
        let c = &state.cameras[v];
        if v == 0 {
            return *c;
        }
        let s = state.scale;
        CameraState { rotation: c.rotation, translation: c.translation * s - c.rotation * c0 * (1.0 - s) }
    }

    fn decode(&self, p: &PersonState) -> Result<Decoded, OptimizerError> {
        let rows = self.prior.decode_rows(&p.z)?;
        let mut locals = Vec::with_capacity(rows.nrows());
        for t in 0..rows.nrows() {
            let mut l = [Matrix3::identity(); NUM_JOINTS];
            for k in 0..NUM_ARTICULATED {
                let b: [f64; 6] = std::array::from_fn(|i| rows[(t, 6 * k + i)]);
                l[k + 1] = rot6d_to_matrix(&b)?;
            }
            locals.push(l);
        }
        Ok(Decoded { rows, locals, offsets: self.template.shaped_offsets(&p.beta) })
    }

    /// Adds the robust reprojection terms of one person-frame.
    fn data_frame(
        &self,
        obs: &[Observation],
        posed: &PosedBody,
        cams: &[CameraState],
        grad: &mut PosedGrad,
        cam_grads: &mut [(Matrix3<f64>, Vector3<f64>)],
    ) -> f64 {
        let c2 = self.kernel.scale * self.kernel.scale;
        let mut value = 0.0;
        for o in obs {
            let cam = &cams[o.view];
            let k = &self.intrinsics[o.view];
            for &(j, px, conf) in &o.joints {
                let w = self.w_data * conf;
                let x = &posed.positions[j];
                let pc = cam.rotation * x + cam.translation;
                if pc.z <= MIN_DEPTH_MM {
                    value += w * c2;
                    continue;
                }
                let iz = 1.0 / pc.z;
                let (xn, yn) = (pc.x * iz, pc.y * iz);
                let u = k.fx * xn + k.skew * yn + k.cx;
                let v = k.fy * yn + k.cy;
                let (ru, rv) = (u - px.x, v - px.y);
                let (rho, drho) = self.kernel.rho_sq(ru * ru + rv * rv);
                value += w * rho;
                let (gu, gv) = (2.0 * w * drho * ru, 2.0 * w * drho * rv);
                let g_pc =
                    Vector3::new(gu * k.fx * iz, (gu * k.skew + gv * k.fy) * iz, -(gu * (k.fx * xn + k.skew * yn) + gv * k.fy * yn) * iz);
                grad.positions[j] += cam.rotation.transpose() * g_pc;
                let cg = &mut cam_grads[o.view];
                cg.0 += g_pc * x.transpose();
                cg.1 += g_pc;
            }
        }
        value
    }

    /// Adds `−min(SDF_i(p), 0)` over samples `p` of person `j` against person `i`.
    #[allow(clippy::too_many_arguments)]
    fn penetration_pair(
        &self,
        j: (&PosedBody, &[Vector3<f64>], &[Point3], &PersonSurface),
        i: &PersonSurface,
        grad_j: &mut PosedGrad,
        offsets_j: &mut [Vector3<f64>],
        grad_i: &mut PosedGrad,
    ) -> f64 {
        let (posed_j, off_j, samples_j, surf_j) = j;
        let (cj, bj) = surf_j.bounds();
        let (ci, bi) = i.bounds();
        if (cj - ci).norm() > bj + bi {
            return 0.0;
        }
        let mut value = 0.0;
        for (d, p) in self.descriptors.iter().zip(samples_j.iter()) {
            if i.is_clear(p, 0.0) {
                continue;
            }
            let hit = i.sdf(p);
            if hit.value >= 0.0 {
                continue;
            }
            value -= self.w_pen * hit.value;
            let g = -hit.normal * self.w_pen;
            let gb = d.backward(self.template, off_j, posed_j, &g, &mut grad_j.positions, &mut grad_j.globals);
            offsets_j[self.template.capsules[d.capsule].joint_b] += gb;
            let spec = &self.template.capsules[hit.capsule];
            grad_i.positions[spec.joint_a] -= g * (1.0 - hit.t);
            grad_i.positions[spec.joint_b] -= g * hit.t;
        }
        value
    }

    fn frame(&self, state: &SceneState, decoded: &[Option<Decoded>], cams: &[CameraState], f: usize, terms: Terms) -> FrameOut {
        let active: Vec<usize> = (0..state.people.len()).filter(|&n| state.people[n].covers(f)).collect();
        let mut out = FrameOut { data: 0.0, pen: 0.0, people: Vec::new(), cameras: Vec::new() };
        if active.is_empty() {
            return out;
        }
        let mut posed = Vec::with_capacity(active.len());
        for &n in &active {
            let p = &state.people[n];
            let d = decoded[n].as_ref().expect("decoded person");
            let t = f - p.first_frame;
            posed.push(forward_kinematics_matrices(self.template, &d.offsets, &d.locals[t], &p.rotations[t], &p.translations[t]));
        }
        let mut grads: Vec<PosedGrad> = active.iter().map(|_| PosedGrad::zeros()).collect();
        let mut extra_offsets: Vec<Vec<Vector3<f64>>> = active.iter().map(|_| vec![Vector3::zeros(); NUM_JOINTS]).collect();
        let mut cam_grads = vec![(Matrix3::zeros(), Vector3::zeros()); cams.len()];

        if terms.data && self.w_data > 0.0 {
            for (a, &n) in active.iter().enumerate() {
                let t = f - state.people[n].first_frame;
                out.data += self.data_frame(&self.obs[n][t], &posed[a], cams, &mut grads[a], &mut cam_grads);
            }
        }
        if terms.penetration && self.w_pen > 0.0 && active.len() > 1 {
            let offsets: Vec<&[Vector3<f64>]> = active.iter().map(|&n| decoded[n].as_ref().unwrap().offsets.as_slice()).collect();
            let surfaces: Vec<PersonSurface> = posed.iter().map(|p| PersonSurface::new(self.template, p)).collect();
            let samples: Vec<Vec<Point3>> =
                posed.iter().zip(&offsets).map(|(p, o)| self.descriptors.iter().map(|d| d.point(self.template, o, p)).collect()).collect();
            for a in 0..active.len() {
                for b in 0..active.len() {
                    if a == b {
                        continue;
                    }
                    let mut ga = std::mem::replace(&mut grads[a], PosedGrad::zeros());
                    let mut gb = std::mem::replace(&mut grads[b], PosedGrad::zeros());
                    out.pen += self.penetration_pair(
                        (&posed[a], offsets[a], &samples[a], &surfaces[a]),
                        &surfaces[b],
                        &mut ga,
                        &mut extra_offsets[a],
                        &mut gb,
                    );
                    grads[a] = ga;
                    grads[b] = gb;
                }
            }
        }

        for (a, &n) in active.iter().enumerate() {
            let p = &state.people[n];
            let d = decoded[n].as_ref().unwrap();
            let t = f - p.first_frame;
            let mut fk = fk_backward(self.template, &d.offsets, &d.locals[t], &p.rotations[t], &posed[a], &grads[a]);
            for (o, e) in fk.offsets.iter_mut().zip(&extra_offsets[a]) {
                *o += e;
            }
            let mut row = vec![0.0; MOTION_DIM];
            for k in 0..NUM_ARTICULATED {
                let b: [f64; 6] = std::array::from_fn(|i| d.rows[(t, 6 * k + i)]);
                let g = rot6d_vjp(&b, &fk.locals[k + 1]);
                row[6 * k..6 * k + 6].copy_from_slice(&g);
            }
            out.people.push(PersonFrameGrad {
                person: n,
                t,
                row,
                rotation: fk.rotation,
                translation: fk.translation,
                beta: fk.beta(self.template),
            });
        }
        out.cameras = cam_grads
            .into_iter()
            .enumerate()
            .filter(|(_, (r, t))| r.iter().any(|v| *v != 0.0) || t.iter().any(|v| *v != 0.0))
            .map(|(v, (r, t))| (v, r, t))
            .collect();
        out
    }

    /// Objective value and gradient of the selected terms.
    pub fn evaluate(&self, state: &SceneState, terms: Terms) -> Result<Evaluation, OptimizerError> {
        let needs_body = terms.data || terms.penetration;
        let decoded: Vec<Option<Decoded>> = if needs_body {
            state.people.par_iter().map(|p| self.decode(p).map(Some)).collect::<Result<_, _>>()?
        } else {
            state.people.iter().map(|_| None).collect()
        };
        let c0 = state.cameras.first().map(|c| -(c.rotation.transpose() * c.translation)).unwrap_or_default();
        let cams: Vec<CameraState> = (0..state.cameras.len()).map(|v| Self::effective_camera(state, v, &c0)).collect();

        let mut grad = SceneGrad {
            cameras: vec![CameraState { rotation: Matrix3::zeros(), translation: Vector3::zeros() }; state.cameras.len()],
            scale: 0.0,
            people: state
                .people
                .iter()
                .map(|p| PersonGrad {
                    beta: [0.0; NUM_SHAPE],
                    z: DMatrix::zeros(p.z.nrows(), p.z.ncols()),
                    rotations: vec![Matrix3::zeros(); p.z.nrows()],
                    translations: vec![Vector3::zeros(); p.z.nrows()],
                })
                .collect(),
        };
        let mut values = TermValues::default();

        if needs_body && !state.people.is_empty() {
            let start = state.people.iter().map(|p| p.first_frame).min().unwrap();
            let end = state.people.iter().map(|p| p.first_frame + p.z.nrows()).max().unwrap();
            let frames: Vec<FrameOut> = (start..end).into_par_iter().map(|f| self.frame(state, &decoded, &cams, f, terms)).collect();
            let mut upstream: Vec<DMatrix<f64>> = state.people.iter().map(|p| DMatrix::zeros(p.z.nrows(), MOTION_DIM)).collect();
            let mut cam_eff = vec![(Matrix3::zeros(), Vector3::zeros()); cams.len()];
            for out in frames {
                values.data += out.data;
                values.penetration += out.pen;
                for g in out.people {
                    for (c, v) in g.row.iter().enumerate() {
                        upstream[g.person][(g.t, c)] = *v;
                    }
                    let pg = &mut grad.people[g.person];
                    pg.rotations[g.t] += g.rotation;
                    pg.translations[g.t] += g.translation;
                    for (a, b) in pg.beta.iter_mut().zip(&g.beta) {
                        *a += b;
                    }
                }
                for (v, r, t) in out.cameras {
                    cam_eff[v].0 += r;
                    cam_eff[v].1 += t;
                }
            }
            let gz: Vec<DMatrix<f64>> = state
                .people
                .par_iter()
                .zip(upstream.par_iter())
                .map(|(p, u)| self.prior.decode_gradient(&p.z, u))
                .collect::<Result<_, _>>()?;
            for (pg, g) in grad.people.iter_mut().zip(gz) {
                pg.z += g;
            }
            self.chain_scale(state, &c0, &cam_eff, &mut grad);
        }

        if terms.prior {
            for (p, pg) in state.people.iter().zip(grad.people.iter_mut()) {
                values.prior_z += self.w_z * p.z.norm_squared();
                pg.z += &p.z * (2.0 * self.w_z);
                for (g, b) in pg.beta.iter_mut().zip(&p.beta) {
                    values.prior_beta += self.w_beta * b * b;
                    *g += 2.0 * self.w_beta * b;
                }
                if self.w_linear > 0.0 {
                    let (v, g) = latent_linear_penalty(&p.z)?;
                    values.prior_linear += self.w_linear * v;
                    pg.z += g * self.w_linear;
                }
            }
        }

        for (name, v) in [
            ("data", values.data),
            ("penetration", values.penetration),
            ("prior_z", values.prior_z),
            ("prior_beta", values.prior_beta),
            ("prior_linear", values.prior_linear),
        ] {
            if !v.is_finite() {
                return Err(OptimizerError::NonFiniteObjective { term: name });
            }
        }
        Ok(Evaluation { terms: values, grad })
    }

    /// Maps gradients of the effective cameras to the stored cameras and the scale.
    fn chain_scale(&self, state: &SceneState, c0: &Vector3<f64>, eff: &[(Matrix3<f64>, Vector3<f64>)], grad: &mut SceneGrad) {
        let s = state.scale;
        let mut g_c0 = Vector3::zeros();
        for (v, (gr, gt)) in eff.iter().enumerate() {
            if v == 0 {
                grad.cameras[0].rotation += gr;
                grad.cameras[0].translation += gt;
                continue;
            }
            let c = &state.cameras[v];
            grad.cameras[v].rotation += gr - gt * c0.transpose() * (1.0 - s);
            grad.cameras[v].translation += gt * s;
            grad.scale += gt.dot(&(c.translation + c.rotation * c0));
            g_c0 -= c.rotation.transpose() * gt * (1.0 - s);
        }
        if let Some(c) = state.cameras.first() {
            grad.cameras[0].translation -= c.rotation * g_c0;
            grad.cameras[0].rotation -= c.translation * g_c0.transpose();
        }
    }
}
