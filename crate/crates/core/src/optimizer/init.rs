//! Warm start of the body variables from triangulated joint trajectories.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{OptimizerError, PersonVariables};
use crate::bodymodel::{matrix_to_rot6d, BodyTemplate, MOTION_DIM, NUM_JOINTS, NUM_SHAPE};
use crate::geometry::{so3, Point3};
use crate::prior::PriorBackend;

/// Rotation taking direction `a` onto direction `b` with no twist.
fn minimal_rotation(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b) = (a.normalize(), b.normalize());
    let axis = a.cross(&b);
    let s = axis.norm();
    let c = a.dot(&b);
    if s < 1e-12 {
        if c > 0.0 {
            return Matrix3::identity();
        }
        let helper = Vector3::ith(a.iamin(), 1.0);
        return so3::axis_angle(&a.cross(&helper), std::f64::consts::PI);
    }
    so3::axis_angle(&(axis / s), s.atan2(c))
}

/// Rotation best mapping each `from[i]` onto `to[i]` (least squares).
fn align(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Matrix3<f64> {
    if from.len() == 1 {
        return minimal_rotation(&from[0], &to[0]);
    }
    let h: Matrix3<f64> = from.iter().zip(to).map(|(a, b)| b * a.transpose()).sum();
    so3::orthonormalize(&h)
}

fn children(template: &BodyTemplate, j: usize) -> Vec<usize> {
    (0..template.joints.len()).filter(|&c| template.parent(c) == Some(j)).collect()
}

/// Fits root orientation, root translation and local joint rotations to 3D
/// joint positions by aligning every bone direction of the rest skeleton
/// (with shape `beta`). Leaf joints and bone twists get identity rotations.
pub fn fit_pose(
    template: &BodyTemplate,
    beta: &[f64; NUM_SHAPE],
    joints: &[Point3],
) -> ([Matrix3<f64>; NUM_JOINTS], Matrix3<f64>, Vector3<f64>) {
    let offsets = template.shaped_offsets(beta);
    let mut locals = [Matrix3::identity(); NUM_JOINTS];
    let mut globals = [Matrix3::identity(); NUM_JOINTS];
    let root_children = children(template, 0);
    let from: Vec<Vector3<f64>> = root_children.iter().map(|&c| offsets[c]).collect();
    let to: Vec<Vector3<f64>> = root_children.iter().map(|&c| joints[c] - joints[0]).collect();
    let rotation = align(&from, &to);
    let translation = joints[0] - rotation * offsets[0];
    globals[0] = rotation;
    for j in 1..NUM_JOINTS {
        let p = template.parent(j).expect("non-root joint has a parent");
        let kids = children(template, j);
        if !kids.is_empty() {
            let from: Vec<Vector3<f64>> = kids.iter().map(|&c| offsets[c]).collect();
            let to: Vec<Vector3<f64>> = kids.iter().map(|&c| globals[p].transpose() * (joints[c] - joints[j])).collect();
            locals[j] = align(&from, &to);
        }
        globals[j] = globals[p] * locals[j];
    }
    (locals, rotation, translation)
}

/// Fills missing samples of a per-frame series by linear interpolation,
/// holding the nearest known value at the ends.
fn fill_gaps(series: &[Option<Point3>]) -> Option<Vec<Point3>> {
    let known: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = Vec::with_capacity(series.len());
    let mut k = 0;
    for i in 0..series.len() {
        let v = if i <= first {
            series[first].unwrap()
        } else if i >= last {
            series[last].unwrap()
        } else {
            while known[k + 1] < i {
                k += 1;
            }
            let (a, b) = (known[k], known[k + 1]);
            if a == i {
                series[a].unwrap()
            } else {
                let w = (i - a) as f64 / (b - a) as f64;
                series[a].unwrap() * (1.0 - w) + series[b].unwrap() * w
            }
        };
        out.push(v);
    }
    Some(out)
}

/// Builds a person's variables from its triangulated trajectory
/// (frame → per-joint position): per-frame bone alignment, then encoding with
/// the prior. Shape starts at zero.
pub fn initialize_person(
    template: &BodyTemplate,
    prior: &PriorBackend,
    track_id: usize,
    trajectory: &BTreeMap<usize, Vec<Option<Point3>>>,
) -> Result<PersonVariables, OptimizerError> {
    let (Some(&first), Some(&last)) = (trajectory.keys().next(), trajectory.keys().next_back()) else {
        return Err(OptimizerError::InsufficientData { track: track_id, frames: 0, needed: 3 });
    };
    let frames = last - first + 1;
    if frames < 3 {
        return Err(OptimizerError::InsufficientData { track: track_id, frames, needed: 3 });
    }
    let mut filled: Vec<Vec<Point3>> = Vec::with_capacity(NUM_JOINTS);
    for j in 0..NUM_JOINTS {
        let series: Vec<Option<Point3>> = (first..=last).map(|f| trajectory.get(&f).and_then(|x| x.get(j).copied().flatten())).collect();
        filled.push(
            fill_gaps(&series)
                .ok_or_else(|| OptimizerError::InvalidVariables(format!("person {track_id}: joint {j} is never triangulated")))?,
        );
    }
    let beta = [0.0; NUM_SHAPE];
    let mut rows = DMatrix::zeros(frames, MOTION_DIM);
    let mut rotation = Vec::with_capacity(frames);
    let mut translation = Vec::with_capacity(frames);
    for t in 0..frames {
        let joints: Vec<Point3> = (0..NUM_JOINTS).map(|j| filled[j][t]).collect();
        let (locals, r, tr) = fit_pose(template, &beta, &joints);
        for (k, l) in locals.iter().enumerate().skip(1) {
            let b = matrix_to_rot6d(l);
            for (i, v) in b.iter().enumerate() {
                rows[(t, 6 * (k - 1) + i)] = *v;
            }
        }
        rotation.push(so3::log(&r));
        translation.push(tr);
    }
    let (z, _) = prior.encode_rows(&rows)?;
    Ok(PersonVariables { track_id, first_frame: first, beta, z, rotation, translation })
}

/// Median ratio of template bone length to observed bone length over all
/// bones whose endpoints are both present. Multiplying the observations by
/// this factor brings them to the template's metric scale.
pub fn bone_length_scale<'a>(template: &BodyTemplate, skeletons: impl IntoIterator<Item = &'a [Option<Point3>]>) -> Option<f64> {
    let rest = template.bone_lengths(&[0.0; NUM_SHAPE]);
    let mut ratios = Vec::new();
    for joints in skeletons {
        for j in 1..NUM_JOINTS.min(joints.len()) {
            let p = template.parent(j).expect("non-root joint has a parent");
            if let (Some(a), Some(b)) = (joints[j], joints[p]) {
                let len = (a - b).norm();
                if len > 0.0 && rest[j - 1] > 0.0 {
                    ratios.push(rest[j - 1] / len);
                }
            }
        }
    }
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(|a, b| a.total_cmp(b));
    let n = ratios.len();
    Some(if n % 2 == 1 { ratios[n / 2] } else { 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]) })
}
