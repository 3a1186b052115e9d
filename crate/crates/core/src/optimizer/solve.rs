//! Staged minimization over freezable variable blocks.

use std::collections::BTreeSet;

use log::info;
use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsOptions, Termination};
use super::objective::{CameraState, PersonState, Problem, SceneGrad, SceneState, TermValues, Terms};
use super::{Block, OptimizerConfig, OptimizerError, PersonVariables, SceneVariables};
use crate::bodymodel::NUM_SHAPE;
use crate::geometry::{so3, Extrinsics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub free: Vec<Block>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective at the stage start and after every accepted iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub initial: TermValues,
    #[serde(rename = "final")]
    pub final_terms: TermValues,
    pub objective: f64,
}

impl SolveReport {
    /// Concatenated objective trace over all stages.
    pub fn trace(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.trace.iter().copied()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub variables: SceneVariables,
    pub report: SolveReport,
}

/// Rotations are optimized as left increments `R = exp(δ)·R₀` of their
/// starting value, so the parameterization stays regular.
#[derive(Debug, Clone)]
struct Params {
    cam_delta: Vec<Vector3<f64>>,
    cam_t: Vec<Vector3<f64>>,
    scale: f64,
    people: Vec<PersonParams>,
}

#[derive(Debug, Clone)]
struct PersonParams {
    beta: [f64; NUM_SHAPE],
    z: DMatrix<f64>,
    delta: Vec<Vector3<f64>>,
    trans: Vec<Vector3<f64>>,
}

struct Anchors {
    cams: Vec<Matrix3<f64>>,
    people: Vec<Vec<Matrix3<f64>>>,
}

/// Parameter units per unit of the optimized (scaled) variable.
#[derive(Debug, Clone, Copy)]
struct BlockScales {
    cam_rot: f64,
    cam_t: f64,
    scale: f64,
    rot: f64,
    trans: f64,
    beta: f64,
    z: f64,
}

impl BlockScales {
    /// Chosen so one unit moves a typical projection by about one pixel.
    fn new(problem: &Problem, vars: &SceneVariables) -> Self {
        let focal = problem.intrinsics.iter().map(|k| k.fx).sum::<f64>() / problem.intrinsics.len().max(1) as f64;
        let cams = vars.effective_cameras();
        let centers: Vec<Vector3<f64>> = cams.iter().map(|e| e.center()).collect();
        let mut scene = Vector3::zeros();
        let mut count = 0.0;
        for p in &vars.people {
            for t in &p.translation {
                scene += t;
                count += 1.0;
            }
        }
        if count > 0.0 {
            scene /= count;
        }
        let mut depths: Vec<f64> = centers.iter().map(|c| (c - scene).norm()).filter(|d| *d > 0.0).collect();
        depths.sort_by(|a, b| a.total_cmp(b));
        let depth = depths.get(depths.len() / 2).copied().unwrap_or(1000.0);
        let px_mm = depth / focal;
        let mut baselines: Vec<f64> = centers.iter().skip(1).map(|c| (c - centers[0]).norm()).filter(|d| *d > 0.0).collect();
        baselines.sort_by(|a, b| a.total_cmp(b));
        let baseline = baselines.get(baselines.len() / 2).copied().unwrap_or(depth);
        Self { cam_rot: 1.0 / focal, cam_t: px_mm, scale: px_mm / baseline, rot: px_mm / 500.0, trans: px_mm, beta: 0.1, z: 0.01 }
    }
}

/// Which parameters are packed into the optimizer's vector.
struct Layout {
    free: BTreeSet<Block>,
    free_views: Vec<bool>,
}

impl Layout {
    fn has(&self, b: Block) -> bool {
        self.free.contains(&b)
    }

    fn pack(&self, p: &Params, s: &BlockScales) -> Vec<f64> {
        let mut x = Vec::new();
        if self.has(Block::Cameras) {
            for v in (0..p.cam_t.len()).filter(|&v| self.free_views[v]) {
                x.extend(p.cam_delta[v].iter().map(|a| a / s.cam_rot));
                x.extend(p.cam_t[v].iter().map(|a| a / s.cam_t));
            }
        }
        if self.has(Block::Scale) {
            x.push(p.scale / s.scale);
        }
        for q in &p.people {
            if self.has(Block::Shape) {
                x.extend(q.beta.iter().map(|a| a / s.beta));
            }
            if self.has(Block::Latent) {
                x.extend(q.z.iter().map(|a| a / s.z));
            }
            if self.has(Block::Rotation) {
                x.extend(q.delta.iter().flat_map(|d| d.iter().map(|a| a / s.rot).collect::<Vec<_>>()));
            }
            if self.has(Block::Translation) {
                x.extend(q.trans.iter().flat_map(|d| d.iter().map(|a| a / s.trans).collect::<Vec<_>>()));
            }
        }
        x
    }

    fn unpack(&self, x: &[f64], p: &mut Params, s: &BlockScales) {
        let mut it = x.iter().copied();
        let next3 = |it: &mut dyn Iterator<Item = f64>, k: f64| {
            Vector3::new(it.next().unwrap() * k, it.next().unwrap() * k, it.next().unwrap() * k)
        };
        if self.has(Block::Cameras) {
            for v in (0..p.cam_t.len()).filter(|&v| self.free_views[v]) {
                p.cam_delta[v] = next3(&mut it, s.cam_rot);
                p.cam_t[v] = next3(&mut it, s.cam_t);
            }
        }
        if self.has(Block::Scale) {
            p.scale = it.next().unwrap() * s.scale;
        }
        for q in &mut p.people {
            if self.has(Block::Shape) {
                for b in q.beta.iter_mut() {
                    *b = it.next().unwrap() * s.beta;
                }
            }
            if self.has(Block::Latent) {
                for v in q.z.iter_mut() {
                    *v = it.next().unwrap() * s.z;
                }
            }
            if self.has(Block::Rotation) {
                for d in q.delta.iter_mut() {
                    *d = next3(&mut it, s.rot);
                }
            }
            if self.has(Block::Translation) {
                for d in q.trans.iter_mut() {
                    *d = next3(&mut it, s.trans);
                }
            }
        }
    }

    /// Gradient with respect to the packed, scaled vector.
    fn pack_grad(&self, p: &Params, a: &Anchors, g: &SceneGrad, s: &BlockScales) -> Vec<f64> {
        let mut x = Vec::new();
        if self.has(Block::Cameras) {
            for v in (0..p.cam_t.len()).filter(|&v| self.free_views[v]) {
                let gd = so3::exp_vjp(&p.cam_delta[v], &(g.cameras[v].rotation * a.cams[v].transpose()));
                x.extend(gd.iter().map(|v| v * s.cam_rot));
                x.extend(g.cameras[v].translation.iter().map(|v| v * s.cam_t));
            }
        }
        if self.has(Block::Scale) {
            x.push(g.scale * s.scale);
        }
        for ((q, gq), anchors) in p.people.iter().zip(&g.people).zip(&a.people) {
            if self.has(Block::Shape) {
                x.extend(gq.beta.iter().map(|v| v * s.beta));
            }
            if self.has(Block::Latent) {
                x.extend(gq.z.iter().map(|v| v * s.z));
            }
            if self.has(Block::Rotation) {
                for ((d, gr), r0) in q.delta.iter().zip(&gq.rotations).zip(anchors) {
                    x.extend(so3::exp_vjp(d, &(gr * r0.transpose())).iter().map(|v| v * s.rot));
                }
            }
            if self.has(Block::Translation) {
                for gt in &gq.translations {
                    x.extend(gt.iter().map(|v| v * s.trans));
                }
            }
        }
        x
    }
}

fn state(p: &Params, a: &Anchors, first_frames: &[usize]) -> SceneState {
    SceneState {
        cameras: p
            .cam_t
            .iter()
            .zip(&p.cam_delta)
            .zip(&a.cams)
            .map(|((t, d), r0)| CameraState { rotation: if *d == Vector3::zeros() { *r0 } else { so3::exp(d) * r0 }, translation: *t })
            .collect(),
        scale: p.scale,
        people: p
            .people
            .iter()
            .zip(&a.people)
            .zip(first_frames)
            .map(|((q, r0), &first)| PersonState {
                first_frame: first,
                beta: q.beta,
                z: q.z.clone(),
                rotations: q.delta.iter().zip(r0).map(|(d, r)| if *d == Vector3::zeros() { *r } else { so3::exp(d) * r }).collect(),
                translations: q.trans.clone(),
            })
            .collect(),
    }
}

/// Runs the configured stages. View 0 and every view flagged in
/// `frozen_views` keep their extrinsics bit-for-bit.
pub fn solve(
    problem: &Problem,
    vars: &SceneVariables,
    cfg: &OptimizerConfig,
    frozen_views: &[bool],
) -> Result<SolveResult, OptimizerError> {
    cfg.validate()?;
    vars.validate()?;
    let views = vars.cameras.len();
    let free_views: Vec<bool> = (0..views).map(|v| v != 0 && !frozen_views.get(v).copied().unwrap_or(false)).collect();
    let anchors = Anchors {
        cams: vars.cameras.iter().map(|e| e.rotation_matrix()).collect(),
        people: vars.people.iter().map(|p| p.rotation.iter().map(so3::exp).collect()).collect(),
    };
    let first_frames: Vec<usize> = vars.people.iter().map(|p| p.first_frame).collect();
    let mut params = Params {
        cam_delta: vec![Vector3::zeros(); views],
        cam_t: vars.cameras.iter().map(|e| e.translation).collect(),
        scale: vars.scale,
        people: vars
            .people
            .iter()
            .map(|p| PersonParams { beta: p.beta, z: p.z.clone(), delta: vec![Vector3::zeros(); p.frames()], trans: p.translation.clone() })
            .collect(),
    };
    let scales = BlockScales::new(problem, vars);
    let initial = problem.evaluate(&state(&params, &anchors, &first_frames), Terms::ALL)?;
    let mut current = initial.clone();
    let mut touched: BTreeSet<Block> = BTreeSet::new();
    let mut stages = Vec::new();

    for stage in &cfg.stages {
        let layout = Layout { free: stage.free.iter().copied().collect(), free_views: free_views.clone() };
        let x0 = layout.pack(&params, &scales);
        let g0 = layout.pack_grad(&params, &anchors, &current.grad, &scales);
        let opts =
            LbfgsOptions { memory: cfg.memory, max_iterations: stage.max_iterations, tolerance: cfg.tolerance, ..LbfgsOptions::default() };
        let base = params.clone();
        let m = minimize(
            x0,
            current.value(),
            g0,
            |x| {
                let mut p = base.clone();
                layout.unpack(x, &mut p, &scales);
                let e = problem.evaluate(&state(&p, &anchors, &first_frames), Terms::ALL).ok()?;
                let g = layout.pack_grad(&p, &anchors, &e.grad, &scales);
                Some((e.value(), g))
            },
            &opts,
        );
        if m.iterations > 0 && m.trace.len() > 1 {
            layout.unpack(&m.x, &mut params, &scales);
            touched.extend(layout.free.iter().copied());
            current = problem.evaluate(&state(&params, &anchors, &first_frames), Terms::ALL)?;
        }
        info!(
            "stage {}: {} iterations, objective {:.6e} -> {:.6e} ({:?})",
            stage.name,
            m.iterations,
            m.trace[0],
            current.value(),
            m.termination
        );
        stages.push(StageReport {
            name: stage.name.clone(),
            free: stage.free.clone(),
            iterations: m.iterations,
            evaluations: m.evaluations,
            termination: m.termination,
            trace: m.trace,
        });
    }

    let variables = finish(vars, &params, &anchors, &touched, &free_views);
    Ok(SolveResult {
        variables,
        report: SolveReport { stages, initial: initial.terms, final_terms: current.terms, objective: current.value() },
    })
}

fn finish(vars: &SceneVariables, p: &Params, a: &Anchors, touched: &BTreeSet<Block>, free_views: &[bool]) -> SceneVariables {
    let mut out = vars.clone();
    if touched.contains(&Block::Cameras) {
        for v in (0..vars.cameras.len()).filter(|&v| free_views[v]) {
            out.cameras[v] = Extrinsics::from_matrix(&(so3::exp(&p.cam_delta[v]) * a.cams[v]), p.cam_t[v]);
        }
    }
    if touched.contains(&Block::Scale) {
        out.scale = p.scale;
    }
    for ((o, q), r0) in out.people.iter_mut().zip(&p.people).zip(&a.people) {
        if touched.contains(&Block::Shape) {
            o.beta = q.beta;
        }
        if touched.contains(&Block::Latent) {
            o.z = q.z.clone();
        }
        if touched.contains(&Block::Rotation) {
            o.rotation = q.delta.iter().zip(r0).map(|(d, r)| so3::log(&(so3::exp(d) * r))).collect();
        }
        if touched.contains(&Block::Translation) {
            o.translation = q.trans.clone();
        }
    }
    out
}

impl PersonVariables {
    /// Root orientation matrices per frame.
    pub fn rotation_matrices(&self) -> Vec<Matrix3<f64>> {
        self.rotation.iter().map(so3::exp).collect()
    }
}
