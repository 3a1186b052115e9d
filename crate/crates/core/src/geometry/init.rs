//! Extrinsic initialization of all views from first-frame 2D poses.

use std::collections::BTreeMap;

use log::{debug, warn};
use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use super::epipolar::{decompose_to_extrinsics, estimate_fundamental, sampson_distance, Correspondence, RansacConfig, RelativePose};
use super::plucker::triangulate;
use super::{so3, Camera, Extrinsics, GeometryError, Intrinsics, Pixel, Point3};
use crate::pose2d::TrackedPose2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub ransac: RansacConfig,
    /// Independent RANSAC runs per view; the best is kept.
    pub candidates_per_view: usize,
    /// Joints below this confidence are not used as correspondences.
    pub min_confidence: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { ransac: RansacConfig::default(), candidates_per_view: 4, min_confidence: 0.1 }
    }
}

/// Outcome of one view's pairwise solve against view 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewInitReport {
    pub view: usize,
    pub initialized: bool,
    pub inliers: usize,
    pub correspondences: usize,
    /// Absent when the view failed to initialize.
    pub mean_sampson_px: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CameraInit {
    pub cameras: Vec<Camera>,
    pub reports: Vec<ViewInitReport>,
}

type JointKey = (usize, usize);

fn joint_table(records: &[&TrackedPose2D], min_conf: f64) -> BTreeMap<JointKey, Pixel> {
    let mut out = BTreeMap::new();
    for r in records {
        for (j, (px, c)) in r.joints.iter().zip(&r.confidence).enumerate() {
            if *c >= min_conf {
                out.insert((r.track_id, j), *px);
            }
        }
    }
    out
}

struct PairSolve {
    pose: RelativePose,
    keys: Vec<JointKey>,
    corrs: Vec<Correspondence>,
    inliers: Vec<bool>,
    mean_sampson: f64,
}

fn solve_pair(
    base: &BTreeMap<JointKey, Pixel>,
    other: &BTreeMap<JointKey, Pixel>,
    k_base: &Intrinsics,
    k_other: &Intrinsics,
    view: usize,
    cfg: &InitConfig,
) -> Result<PairSolve, GeometryError> {
    let keys: Vec<JointKey> = base.keys().filter(|k| other.contains_key(k)).copied().collect();
    let corrs: Vec<Correspondence> = keys.iter().map(|k| (base[k], other[k])).collect();
    let mut best: Option<PairSolve> = None;
    let mut last_err = None;
    for c in 0..cfg.candidates_per_view.max(1) {
        let ransac =
            RansacConfig { seed: cfg.ransac.seed ^ ((view as u64) << 32) ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), ..cfg.ransac };
        let attempt = estimate_fundamental(&corrs, &ransac).and_then(|est| {
            let pose = decompose_to_extrinsics(&est.f, k_base, k_other, &corrs, &est.inliers)?;
            let mean = corrs.iter().zip(&est.inliers).filter(|(_, m)| **m).map(|(c, _)| sampson_distance(&est.f, c)).sum::<f64>()
                / est.inlier_count.max(1) as f64;
            Ok(PairSolve { pose, keys: keys.clone(), corrs: corrs.clone(), inliers: est.inliers, mean_sampson: mean })
        });
        match attempt {
            Ok(s) => {
                let replace = match &best {
                    None => true,
                    Some(b) => {
                        let (ni, bi) = (count(&s.inliers), count(&b.inliers));
                        ni > bi || (ni == bi && s.mean_sampson < b.mean_sampson)
                    }
                };
                if replace {
                    best = Some(s);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(GeometryError::NoConsensus { ratio: 0.0, required: cfg.ransac.min_inlier_ratio }))
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|m| **m).count()
}

/// Points of a solved pair in the base-view frame, keyed by joint.
fn pair_points(s: &PairSolve, k_base: &Intrinsics, k_other: &Intrinsics) -> BTreeMap<JointKey, Point3> {
    let base_cam = Camera::new(0, *k_base, Extrinsics::identity());
    let other_cam = Camera::new(1, *k_other, s.pose.extrinsics);
    let mut out = BTreeMap::new();
    for ((key, c), m) in s.keys.iter().zip(&s.corrs).zip(&s.inliers) {
        if !m {
            continue;
        }
        if let Ok(p) = triangulate(&[base_cam.pixel_to_ray(&c.0), other_cam.pixel_to_ray(&c.1)], None) {
            out.insert(*key, p);
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Initializes every view's extrinsics from one frame of tracked 2D poses.
///
/// View 0 defines the world frame. Each other view is solved pairwise
/// against view 0 from the joints of every person (matched by track id and
/// joint index). Translations are brought to a common gauge in which the
/// lowest-index initialized view sits at unit distance from view 0.
pub fn init_all_cameras(first_frame: &[TrackedPose2D], intrinsics: &[Intrinsics], cfg: &InitConfig) -> Result<CameraInit, GeometryError> {
    let views = intrinsics.len();
    if views < 2 {
        return Err(GeometryError::TooFewViews(views));
    }
    let per_view: Vec<Vec<&TrackedPose2D>> = (0..views).map(|v| first_frame.iter().filter(|p| p.view_id == v).collect()).collect();
    let tables: Vec<BTreeMap<JointKey, Pixel>> = per_view.iter().map(|r| joint_table(r, cfg.min_confidence)).collect();

    let mut reports = vec![ViewInitReport {
        view: 0,
        initialized: true,
        inliers: tables[0].len(),
        correspondences: tables[0].len(),
        mean_sampson_px: Some(0.0),
        error: None,
    }];
    let mut solves: Vec<Option<PairSolve>> = vec![None];
    for v in 1..views {
        match solve_pair(&tables[0], &tables[v], &intrinsics[0], &intrinsics[v], v, cfg) {
            Ok(s) => {
                debug!("view {v}: {} / {} inliers, mean Sampson {:.3} px", count(&s.inliers), s.corrs.len(), s.mean_sampson);
                reports.push(ViewInitReport {
                    view: v,
                    initialized: true,
                    inliers: count(&s.inliers),
                    correspondences: s.corrs.len(),
                    mean_sampson_px: Some(s.mean_sampson),
                    error: None,
                });
                solves.push(Some(s));
            }
            Err(e) => {
                warn!("view {v} failed to initialize: {e}");
                reports.push(ViewInitReport {
                    view: v,
                    initialized: false,
                    inliers: 0,
                    correspondences: 0,
                    mean_sampson_px: None,
                    error: Some(e.to_string()),
                });
                solves.push(None);
            }
        }
    }

    let reference = (1..views)
        .find(|&v| solves[v].is_some())
        .ok_or(GeometryError::NoConsensus { ratio: 0.0, required: cfg.ransac.min_inlier_ratio })?;
    let ref_points = pair_points(solves[reference].as_ref().unwrap(), &intrinsics[0], &intrinsics[reference]);

    let mut cameras: Vec<Camera> =
        (0..views).map(|v| Camera { id: v, intrinsics: intrinsics[v], extrinsics: Extrinsics::identity(), initialized: v == 0 }).collect();
    for v in 1..views {
        let Some(s) = &solves[v] else { continue };
        let scale = if v == reference {
            Some(1.0)
        } else {
            let pts = pair_points(s, &intrinsics[0], &intrinsics[v]);
            let ratios: Vec<f64> =
                pts.iter().filter_map(|(k, p)| ref_points.get(k).map(|q| q.z / p.z)).filter(|r| r.is_finite() && *r > 0.0).collect();
            median(ratios)
        };
        match scale {
            Some(scale) => {
                let e = s.pose.extrinsics;
                cameras[v].extrinsics = Extrinsics { rotation: e.rotation, translation: e.translation * scale };
                cameras[v].initialized = true;
            }
            None => {
                reports[v].initialized = false;
                reports[v].error = Some("no joints shared with the reference view to fix the scale".into());
            }
        }
    }
    Ok(CameraInit { cameras, reports })
}

/// Triangulates keyed joints from every initialized camera that sees them.
pub fn triangulate_records(records: &[TrackedPose2D], cameras: &[Camera], min_conf: f64) -> BTreeMap<JointKey, Point3> {
    let mut rays: BTreeMap<JointKey, (Vec<_>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let Some(cam) = cameras.get(r.view_id).filter(|c| c.initialized) else { continue };
        for (j, (px, c)) in r.joints.iter().zip(&r.confidence).enumerate() {
            if *c >= min_conf {
                let e = rays.entry((r.track_id, j)).or_default();
                e.0.push(cam.pixel_to_ray(px));
                e.1.push(*c);
            }
        }
    }
    rays.into_iter().filter_map(|(k, (r, w))| triangulate(&r, Some(&w)).ok().map(|p| (k, p))).collect()
}

/// Camera pose from 3D-2D correspondences with known intrinsics (normalized
/// DLT followed by projection onto SO(3)). Needs ≥ 6 non-coplanar points.
pub fn resect(points: &[Point3], pixels: &[Pixel], k: &Intrinsics) -> Result<Extrinsics, GeometryError> {
    let n = points.len();
    if n < 6 || pixels.len() != n {
        return Err(GeometryError::InsufficientCorrespondences { needed: 6, got: n.min(pixels.len()) });
    }
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n as f64;
    let spread = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
    let s = if spread > 0.0 { 3f64.sqrt() / spread } else { 1.0 };
    let rows = (2 * n).max(12);
    let mut a = DMatrix::<f64>::zeros(rows, 12);
    for (i, (p, px)) in points.iter().zip(pixels).enumerate() {
        let q = (p - centroid) * s;
        let x = k.unproject(px);
        let hp = [q.x, q.y, q.z, 1.0];
        for c in 0..4 {
            a[(2 * i, c)] = hp[c];
            a[(2 * i, 8 + c)] = -x.x * hp[c];
            a[(2 * i + 1, 4 + c)] = hp[c];
            a[(2 * i + 1, 8 + c)] = -x.y * hp[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration("resection SVD failed"))?;
    let sv = &svd.singular_values;
    let imin = sv.imin();
    let row = v_t.row(imin);
    let mut p = Matrix3x4::from_fn(|r, c| row[4 * r + c]);
    // Undo the point normalization: X_norm = s (X - centroid).
    let m = p.fixed_view::<3, 3>(0, 0) * s;
    let t_col = p.column(3) - m * centroid;
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
    p.set_column(3, &t_col);
    let m: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into();
    // cbrt keeps the sign of det(M), so M / scale has det +1.
    let scale = m.determinant().cbrt();
    if scale.abs() < 1e-300 {
        return Err(GeometryError::DegenerateConfiguration("resection matrix is singular"));
    }
    let r = so3::orthonormalize(&(m / scale));
    let t: Vector3<f64> = p.column(3) / scale;
    Ok(Extrinsics::from_matrix(&r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn resection_recovers_pose() {
        let k = Intrinsics::new(1100.0, 1100.0, 960.0, 540.0, 0.0).unwrap();
        let ext = Extrinsics::from_center(&so3::exp(&Vector3::new(1.2, 0.3, -0.2)), &Vector3::new(3000.0, -1500.0, 2000.0));
        let cam = Camera::new(0, k, ext);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vector3<f64>> = (0..20)
            .map(|_| Vector3::new(rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0), rng.random_range(0.0..1800.0)))
            .filter(|p| cam.extrinsics.to_camera(p).z > 100.0)
            .collect();
        let px: Vec<Vector2<f64>> = pts.iter().map(|p| project(p, &cam).unwrap()).collect();
        let est = resect(&pts, &px, &k).unwrap();
        assert!(so3::angle_between(&est.rotation_matrix(), &ext.rotation_matrix()) < 1e-9);
        assert!((est.center() - ext.center()).norm() < 1e-6);
    }

    #[test]
    fn single_view_is_an_error() {
        let k = Intrinsics::new(1000.0, 1000.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(init_all_cameras(&[], &[k], &InitConfig::default()), Err(GeometryError::TooFewViews(1))));
    }
}
