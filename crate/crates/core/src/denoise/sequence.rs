//! Sequential per-person filtering with trajectory maintenance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_matrices, select_views, DenoiseConfig, DenoiseError};
use crate::geometry::{triangulate, Camera, PlueckerRay, Point3};
use crate::pose2d::{ObservationIndex, TrackedPose2D, DEFAULT_JOINTS};

/// Hips, neck and shoulders of the default skeleton.
pub const TORSO_JOINTS: [usize; 5] = [1, 2, 12, 16, 17];

/// Last known 3D position of every joint of one person.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub x: Vec<Option<Point3>>,
    /// Frames since the last successful triangulation.
    pub age: Vec<usize>,
}

impl TrajectoryState {
    pub fn new(joints: usize) -> Self {
        Self { x: vec![None; joints], age: vec![0; joints] }
    }

    /// Previous position if it is recent enough to use.
    pub fn previous(&self, joint: usize, max_gap: usize) -> Option<&Point3> {
        self.x[joint].as_ref().filter(|_| self.age[joint] <= max_gap)
    }

    fn tick(&mut self, joint: usize) {
        self.age[joint] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDecision {
    pub frame: usize,
    pub track_id: usize,
    pub observed: Vec<usize>,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct DenoiseOutput {
    /// Kept records ordered by frame, view, then track, each carrying its
    /// `selected_views`.
    pub filtered: Vec<TrackedPose2D>,
    /// track → frame → per-joint triangulated position.
    pub trajectories: BTreeMap<usize, BTreeMap<usize, Vec<Option<Point3>>>>,
    pub decisions: Vec<FrameDecision>,
}

impl DenoiseOutput {
    pub fn is_kept(&self, view: usize, frame: usize, track: usize) -> bool {
        self.filtered.binary_search_by(|r| (r.frame, r.view_id, r.track_id).cmp(&(frame, view, track))).is_ok()
    }
}

struct PersonResult {
    filtered: Vec<TrackedPose2D>,
    trajectory: BTreeMap<usize, Vec<Option<Point3>>>,
    decisions: Vec<FrameDecision>,
}

fn joint_rays(records: &[&TrackedPose2D], cams: &[Camera], joint: usize) -> Vec<Option<PlueckerRay>> {
    let mut rays = vec![None; cams.len()];
    for r in records {
        if r.confidence[joint] > 0.0 {
            rays[r.view_id] = Some(cams[r.view_id].pixel_to_ray(&r.joints[joint]));
        }
    }
    rays
}

fn triangulate_views(records: &[&TrackedPose2D], cams: &[Camera], joint: usize, keep: &[bool]) -> Option<Point3> {
    let (rays, weights): (Vec<PlueckerRay>, Vec<f64>) = records
        .iter()
        .filter(|r| keep[r.view_id] && r.confidence[joint] > 0.0)
        .map(|r| (cams[r.view_id].pixel_to_ray(&r.joints[joint]), r.confidence[joint]))
        .unzip();
    if rays.len() < 2 {
        return None;
    }
    triangulate(&rays, Some(&weights)).ok()
}

fn joint_weights(joints: usize, torso_weight: f64) -> Vec<f64> {
    let mut w = vec![1.0; joints];
    if joints == DEFAULT_JOINTS {
        for j in TORSO_JOINTS {
            w[j] = torso_weight;
        }
    }
    w
}

/// Weighted majority over per-joint selections: a view stays when it was
/// selected by at least half the vote weight of the joints it could join.
fn vote(selections: &[Option<Vec<bool>>], rays_valid: &[Vec<bool>], weights: &[f64], views: usize) -> Vec<bool> {
    let mut votes = vec![0.0; views];
    let mut eligible = vec![0.0; views];
    for ((sel, valid), w) in selections.iter().zip(rays_valid).zip(weights) {
        let Some(sel) = sel else { continue };
        for v in 0..views {
            if valid[v] {
                eligible[v] += w;
                if sel[v] {
                    votes[v] += w;
                }
            }
        }
    }
    (0..views).map(|v| eligible[v] > 0.0 && votes[v] >= 0.5 * eligible[v]).collect()
}

fn denoise_person(
    index: &ObservationIndex<'_>,
    frames: &[usize],
    track: usize,
    cams: &[Camera],
    joints: usize,
    cfg: &DenoiseConfig,
) -> PersonResult {
    let weights = joint_weights(joints, cfg.torso_weight);
    let mut state = TrajectoryState::new(joints);
    let mut started = false;
    let mut out = PersonResult { filtered: Vec::new(), trajectory: BTreeMap::new(), decisions: Vec::new() };

    for &frame in frames {
        let records: Vec<&TrackedPose2D> = index.person_frame(frame, track).into_iter().filter(|r| cams[r.view_id].initialized).collect();
        if records.is_empty() {
            continue;
        }
        let mut observed = vec![false; cams.len()];
        for r in &records {
            observed[r.view_id] = true;
        }

        let mut selections = Vec::with_capacity(joints);
        let mut rays_valid = Vec::with_capacity(joints);
        for j in 0..joints {
            let rays = joint_rays(&records, cams, j);
            rays_valid.push(rays.iter().map(Option::is_some).collect::<Vec<_>>());
            let sel = build_matrices(&rays, state.previous(j, cfg.max_gap)).and_then(|m| select_views(&m, cfg)).ok().map(|s| s.s);
            selections.push(sel);
        }
        let keep = vote(&selections, &rays_valid, &weights, cams.len());
        let selected: Vec<usize> = (0..cams.len()).filter(|&v| keep[v]).collect();
        out.decisions.push(FrameDecision {
            frame,
            track_id: track,
            observed: (0..cams.len()).filter(|&v| observed[v]).collect(),
            selected: if selected.len() >= 2 { selected.clone() } else { Vec::new() },
        });

        // The first frame is bootstrapped from every reported view.
        let tri_views = if started { keep.clone() } else { observed.clone() };
        let usable = selected.len() >= 2 || !started;
        let mut positions = vec![None; joints];
        for j in 0..joints {
            let x = if usable { triangulate_views(&records, cams, j, &tri_views) } else { None };
            match x {
                Some(x) => {
                    state.x[j] = Some(x);
                    state.age[j] = 0;
                    positions[j] = Some(x);
                }
                None => state.tick(j),
            }
        }
        if positions.iter().any(Option::is_some) {
            started = true;
            out.trajectory.insert(frame, positions);
        }
        if selected.len() >= 2 {
            for r in &records {
                if keep[r.view_id] {
                    let mut kept = (*r).clone();
                    kept.selected_views = Some(selected.clone());
                    out.filtered.push(kept);
                }
            }
        }
    }
    out
}

/// Filters all tracks of `streams` against `cams` (indexed by view id).
/// Records of uninitialized cameras are ignored.
pub fn denoise_sequence(streams: &[TrackedPose2D], cams: &[Camera], cfg: &DenoiseConfig) -> Result<DenoiseOutput, DenoiseError> {
    cfg.validate()?;
    let Some(first) = streams.first() else {
        return Ok(DenoiseOutput::default());
    };
    let joints = first.joint_count();
    for r in streams {
        if r.view_id >= cams.len() {
            return Err(DenoiseError::UnknownView { view: r.view_id, cameras: cams.len() });
        }
        if r.joint_count() != joints || r.confidence.len() != joints {
            return Err(DenoiseError::JointCountMismatch {
                view: r.view_id,
                frame: r.frame,
                track: r.track_id,
                expected: joints,
                got: r.joint_count(),
            });
        }
    }
    let index = ObservationIndex::new(streams);
    let frames = index.frames();
    let tracks = index.tracks();
    let results: Vec<(usize, PersonResult)> =
        tracks.par_iter().map(|&t| (t, denoise_person(&index, &frames, t, cams, joints, cfg))).collect();

    let mut out = DenoiseOutput::default();
    for (track, r) in results {
        out.filtered.extend(r.filtered);
        out.decisions.extend(r.decisions);
        out.trajectories.insert(track, r.trajectory);
    }
    out.filtered.sort_by_key(|r| (r.frame, r.view_id, r.track_id));
    out.decisions.sort_by_key(|d| (d.frame, d.track_id));
    Ok(out)
}
