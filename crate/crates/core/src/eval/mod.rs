//! Camera and pose accuracy metrics, rigid alignment of camera sets, and
//! SVG plots.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod plot;

pub use plot::{render_frusta, render_plots, render_trace, render_trajectories, PlotInput};

use crate::geometry::{so3, Camera, Extrinsics, Point3};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} cameras to align, got {got}")]
    TooFewCameras { needed: usize, got: usize },
    #[error("camera sets differ in size: {est} estimated vs {gt} ground truth")]
    CountMismatch { est: usize, gt: usize },
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// Similarity `x ↦ s·R·x + t` taking estimated world coordinates to ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "SimilarityRepr", from = "SimilarityRepr")]
pub struct Similarity {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

/// Row-major rotation for the JSON form.
#[derive(Serialize, Deserialize)]
struct SimilarityRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    scale: f64,
}

impl From<Similarity> for SimilarityRepr {
    fn from(s: Similarity) -> Self {
        let r = s.rotation;
        Self { rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]), translation: s.translation.into(), scale: s.scale }
    }
}

impl From<SimilarityRepr> for Similarity {
    fn from(s: SimilarityRepr) -> Self {
        Self { rotation: Matrix3::from_fn(|i, j| s.rotation[i][j]), translation: Vector3::from(s.translation), scale: s.scale }
    }
}

impl Similarity {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros(), scale: 1.0 }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p * self.scale + self.translation
    }

    /// The camera seen from the target frame: same image of every mapped point
    /// up to the depth scale.
    pub fn apply_camera(&self, e: &Extrinsics) -> Extrinsics {
        Extrinsics::from_center(&(e.rotation_matrix() * self.rotation.transpose()), &self.apply(&e.center()))
    }
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub transform: Similarity,
    pub aligned: Vec<Extrinsics>,
    /// RMS center residual after alignment, mm.
    pub residual: f64,
    /// Centers are (nearly) collinear, so rotation about their line is arbitrary.
    pub degenerate: bool,
}

/// Closed-form least-squares fit (Umeyama) of `dst ≈ s·R·src + t`.
pub fn fit_similarity(src: &[Point3], dst: &[Point3], allow_scale: bool) -> (Similarity, bool) {
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let (da, db) = (a - mu_s, b - mu_d);
        cov += db * da.transpose();
        var_s += da.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * vt;
    let sv = svd.singular_values;
    let scale = if allow_scale && var_s > 0.0 { (sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)]) / var_s } else { 1.0 };
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    let degenerate = sorted[1] <= 1e-9 * sorted[0].max(f64::MIN_POSITIVE);
    (Similarity { rotation, translation: mu_d - rotation * mu_s * scale, scale }, degenerate)
}

/// Aligns estimated cameras to ground truth through their centers.
pub fn rigid_align(est: &[Extrinsics], gt: &[Extrinsics], allow_scale: bool) -> Result<Alignment, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::CountMismatch { est: est.len(), gt: gt.len() });
    }
    if est.len() < 3 {
        return Err(EvalError::TooFewCameras { needed: 3, got: est.len() });
    }
    let src: Vec<Point3> = est.iter().map(|e| e.center()).collect();
    let dst: Vec<Point3> = gt.iter().map(|e| e.center()).collect();
    let (transform, degenerate) = fit_similarity(&src, &dst, allow_scale);
    if degenerate {
        warn!("camera centers are collinear; the alignment rotation about their line is arbitrary");
    }
    let residual = (src.iter().zip(&dst).map(|(a, b)| (transform.apply(a) - b).norm_squared()).sum::<f64>() / src.len() as f64).sqrt();
    let aligned = est.iter().map(|e| transform.apply_camera(e)).collect();
    Ok(Alignment { transform, aligned, residual, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraErrorReport {
    pub pos_mm: Vec<f64>,
    pub ang_deg: Vec<f64>,
    pub reproj_px: Vec<f64>,
    pub mean_pos_mm: f64,
    pub mean_ang_deg: f64,
    pub mean_reproj_px: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per-view center distance, geodesic rotation distance and mean pixel
/// disagreement over `points` between aligned and ground-truth cameras.
/// Points behind either camera are skipped.
pub fn camera_errors(aligned: &[Extrinsics], gt: &[Camera], points: &[Point3]) -> Result<CameraErrorReport, EvalError> {
    if aligned.len() != gt.len() {
        return Err(EvalError::CountMismatch { est: aligned.len(), gt: gt.len() });
    }
    let mut pos = Vec::with_capacity(gt.len());
    let mut ang = Vec::with_capacity(gt.len());
    let mut rep = Vec::with_capacity(gt.len());
    for (e, g) in aligned.iter().zip(gt) {
        pos.push((e.center() - g.extrinsics.center()).norm());
        ang.push(so3::angle_between(&e.rotation_matrix(), &g.extrinsics.rotation_matrix()).to_degrees());
        let est = Camera { extrinsics: *e, ..*g };
        let d: Vec<f64> = points.iter().filter_map(|p| Some((est.project(p).ok()? - g.project(p).ok()?).norm())).collect();
        rep.push(mean(&d));
    }
    Ok(CameraErrorReport {
        mean_pos_mm: mean(&pos),
        mean_ang_deg: mean(&ang),
        mean_reproj_px: mean(&rep),
        pos_mm: pos,
        ang_deg: ang,
        reproj_px: rep,
    })
}

/// Limbs scored by PCP: upper and lower arms and legs, torso and head.
pub const PCP_LIMBS: [(usize, usize); 10] = [(0, 12), (12, 15), (16, 18), (18, 20), (17, 19), (19, 21), (1, 4), (4, 7), (2, 5), (5, 8)];

/// Percentage of limbs (over all frames) whose mean endpoint error is below
/// `alpha` times the ground-truth limb length. Inputs are `[frame][joint]`.
pub fn pcp(est: &[Vec<Point3>], gt: &[Vec<Point3>], limbs: &[(usize, usize)], alpha: f64) -> f64 {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (e, g) in est.iter().zip(gt) {
        for &(a, b) in limbs {
            total += 1;
            let err = 0.5 * ((e[a] - g[a]).norm() + (e[b] - g[b]).norm());
            if err < alpha * (g[a] - g[b]).norm() {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Mean per-joint position error over matching frames, mm.
pub fn mean_joint_error(est: &[Vec<Point3>], gt: &[Vec<Point3>]) -> f64 {
    let d: Vec<f64> = est.iter().zip(gt).flat_map(|(e, g)| e.iter().zip(g).map(|(a, b)| (a - b).norm())).collect();
    mean(&d)
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "Pos.")]
    pub pos_mm: f64,
    #[serde(rename = "Ang.")]
    pub ang_deg: f64,
    #[serde(rename = "Reproj.")]
    pub reproj_px: f64,
    /// Keyed by `actor <track id>`.
    #[serde(rename = "PCP")]
    pub pcp: BTreeMap<String, f64>,
    pub mean_joint_error_mm: f64,
    pub cameras: CameraErrorReport,
    pub alignment: Similarity,
    pub alignment_residual_mm: f64,
}

/// Everything the metrics need about one estimated person, in the estimate's frame.
#[derive(Debug, Clone)]
pub struct PersonEstimate {
    pub track_id: usize,
    pub first_frame: usize,
    /// `[local frame][joint]`.
    pub joints: Vec<Vec<Point3>>,
}

/// Aligns the estimate to ground truth through the cameras, then scores
/// cameras and every person whose track id matches a ground-truth person.
/// `gt_joints[n]` is `[frame][joint]` for ground-truth person `n`.
pub fn evaluate(
    est_cameras: &[Extrinsics],
    people: &[PersonEstimate],
    gt_cameras: &[Camera],
    gt_joints: &[(usize, Vec<Vec<Point3>>)],
    allow_scale: bool,
    alpha: f64,
) -> Result<Metrics, EvalError> {
    let gt_ext: Vec<Extrinsics> = gt_cameras.iter().map(|c| c.extrinsics).collect();
    let al = rigid_align(est_cameras, &gt_ext, allow_scale)?;
    let points: Vec<Point3> = gt_joints.iter().flat_map(|(_, f)| f.iter().flatten().copied()).collect();
    let cams = camera_errors(&al.aligned, gt_cameras, &points)?;
    let mut pcp_map = BTreeMap::new();
    let mut all_est = Vec::new();
    let mut all_gt = Vec::new();
    for (track, gt) in gt_joints {
        let key = format!("actor {track}");
        let Some(p) = people.iter().find(|p| p.track_id == *track) else {
            pcp_map.insert(key, 0.0);
            continue;
        };
        let mut e = Vec::new();
        let mut g = Vec::new();
        for (t, joints) in p.joints.iter().enumerate() {
            if let Some(truth) = gt.get(p.first_frame + t) {
                e.push(joints.iter().map(|x| al.transform.apply(x)).collect::<Vec<_>>());
                g.push(truth.clone());
            }
        }
        pcp_map.insert(key, pcp(&e, &g, &PCP_LIMBS, alpha));
        all_est.extend(e);
        all_gt.extend(g);
    }
    Ok(Metrics {
        pos_mm: cams.mean_pos_mm,
        ang_deg: cams.mean_ang_deg,
        reproj_px: cams.mean_reproj_px,
        pcp: pcp_map,
        mean_joint_error_mm: mean_joint_error(&all_est, &all_gt),
        cameras: cams,
        alignment: al.transform,
        alignment_residual_mm: al.residual,
    })
}
