//! Seeded synthetic multi-person scenes: ground-truth cameras and motions,
//! noiseless projections, and observations corrupted by jitter, identity
//! swaps and dropouts, with an exact log of every corruption.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod motion;

pub use motion::{closed_catmull_rom, Walker};

use crate::bodymodel::{forward_kinematics, params_to_sequence, BodyTemplate, MotionClip, MotionSequence, NUM_JOINTS};
use crate::geometry::{so3, Camera, Extrinsics, Intrinsics, Pixel, Point3};
use crate::io::{read_cameras, read_json, write_json, IoError};
use crate::pose2d::TrackedPose2D;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub people: usize,
    pub views: usize,
    pub frames: usize,
    pub fps: f64,
    /// Camera ring radius, mm.
    pub ring_radius: f64,
    pub camera_height_min: f64,
    pub camera_height_max: f64,
    pub focal_px: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Radius of the circle holding the people's path centers, mm.
    pub person_spread: f64,
    /// Isotropic Gaussian 2D jitter, px.
    pub jitter_px: f64,
    /// Probability that a block of `swap_persistence` frames of one view is swapped.
    pub swap_rate: f64,
    pub swap_persistence: usize,
    /// Per-record probability of a missing detection.
    pub dropout_rate: f64,
    /// Rotation error of the perturbed camera set, degrees.
    pub perturb_angle_deg: f64,
    /// Center error of the perturbed camera set as a fraction of the baseline to view 0.
    pub perturb_baseline: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            people: 3,
            views: 5,
            frames: 200,
            fps: 30.0,
            ring_radius: 4500.0,
            camera_height_min: 1800.0,
            camera_height_max: 2600.0,
            focal_px: 1100.0,
            image_width: 1920.0,
            image_height: 1080.0,
            person_spread: 1600.0,
            jitter_px: 2.0,
            swap_rate: 0.05,
            swap_persistence: 20,
            dropout_rate: 0.0,
            perturb_angle_deg: 5.0,
            perturb_baseline: 0.05,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.to_string()));
        if self.views < 2 {
            return bad("need at least 2 views");
        }
        if self.people == 0 || self.frames == 0 {
            return bad("need at least one person and one frame");
        }
        for (name, r) in [("swap_rate", self.swap_rate), ("dropout_rate", self.dropout_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.swap_rate > 0.0 && self.people < 2 {
            return bad("identity swaps need at least 2 people");
        }
        if self.swap_persistence == 0 {
            return bad("swap_persistence must be positive");
        }
        let positive = [self.fps, self.ring_radius, self.focal_px, self.image_width, self.image_height];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("fps, ring radius, focal length and image size must be positive");
        }
        if !(self.jitter_px >= 0.0) || !(self.perturb_angle_deg >= 0.0) || !(self.perturb_baseline >= 0.0) {
            return bad("noise magnitudes must be non-negative");
        }
        if self.camera_height_min > self.camera_height_max {
            return bad("camera_height_min exceeds camera_height_max");
        }
        if self.ring_radius <= self.person_spread + 1500.0 {
            return bad("camera ring must enclose the people with margin");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Swap,
    Dropout,
}

/// One logged corruption: frames are an inclusive range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub view: usize,
    pub frames: [usize; 2],
    pub persons: Vec<usize>,
}

impl NoiseEvent {
    pub fn covers(&self, view: usize, frame: usize) -> bool {
        self.view == view && (self.frames[0]..=self.frames[1]).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonTruth {
    pub track_id: usize,
    pub clip: MotionClip,
    /// Per frame, 24 joint positions (mm).
    pub joints: Vec<Vec<[f64; 3]>>,
}

impl PersonTruth {
    pub fn joint(&self, frame: usize, j: usize) -> Point3 {
        Vector3::from(self.joints[frame][j])
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub config: SceneConfig,
    pub cameras: Vec<Camera>,
    /// Cameras with the configured rotation/center error (view 0 exact).
    pub cameras_unknown: Vec<Camera>,
    pub people: Vec<PersonTruth>,
    /// Noiseless projections, one record per (view, frame, person).
    pub projections: Vec<TrackedPose2D>,
    pub events: Vec<NoiseEvent>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub truth: GroundTruth,
    pub observations: Vec<TrackedPose2D>,
    pub template: BodyTemplate,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn look_at(center: &Point3, target: &Point3) -> Matrix3<f64> {
    let z = (target - center).normalize();
    let x = z.cross(&Vector3::z()).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

fn make_cameras(cfg: &SceneConfig) -> Vec<Camera> {
    let mut rng = stream(cfg.seed, 1);
    let k = Intrinsics::new(cfg.focal_px, cfg.focal_px, cfg.image_width / 2.0, cfg.image_height / 2.0, 0.0).expect("validated intrinsics");
    let target = Vector3::new(0.0, 0.0, 900.0);
    (0..cfg.views)
        .map(|v| {
            let a = TAU * v as f64 / cfg.views as f64 + rng.random_range(-0.2..0.2);
            let h = rng.random_range(cfg.camera_height_min..=cfg.camera_height_max);
            let c = Vector3::new(cfg.ring_radius * a.cos(), cfg.ring_radius * a.sin(), h);
            Camera::new(v, k, Extrinsics::from_center(&look_at(&c, &target), &c))
        })
        .collect()
}

/// Rotates every view except 0 by `angle_deg` about a random axis and moves
/// its center by `baseline_frac` of its distance to view 0.
pub fn perturb_cameras(cams: &[Camera], angle_deg: f64, baseline_frac: f64, seed: u64) -> Vec<Camera> {
    let mut rng = stream(seed, 2);
    let c0 = cams[0].extrinsics.center();
    cams.iter()
        .map(|cam| {
            let axis = random_unit(&mut rng);
            let dir = random_unit(&mut rng);
            if cam.id == 0 {
                return *cam;
            }
            let c = cam.extrinsics.center();
            let r = so3::axis_angle(&axis, angle_deg.to_radians()) * cam.extrinsics.rotation_matrix();
            let c_new = c + dir * baseline_frac * (c - c0).norm();
            Camera { extrinsics: Extrinsics::from_center(&r, &c_new), ..*cam }
        })
        .collect()
}

fn project_all(cam: &Camera, joints: &[Point3]) -> (Vec<Pixel>, Vec<f64>) {
    joints
        .iter()
        .map(|p| match cam.project(p) {
            Ok(px) => (px, 1.0),
            Err(_) => (Vector2::zeros(), 0.0),
        })
        .unzip()
}

/// Walking motions drawn independently of any scene, for fitting a motion
/// prior. Each clip has `frames` frames at `fps`.
pub fn motion_corpus(clips: usize, frames: usize, fps: f64, seed: u64) -> Vec<MotionSequence> {
    let template = BodyTemplate::default();
    let mut rng = stream(seed, 7);
    (0..clips)
        .map(|_| {
            let walker = Walker::random(&mut rng, Vector2::zeros());
            let params: Vec<_> = (0..frames).map(|t| walker.params(t, frames, fps)).collect();
            params_to_sequence(&template, &params).expect("consistent walker parameters").motion
        })
        .collect()
}

/// Per view and frame, the person whose detection each track reports.
type SourceTable = Vec<Vec<Vec<usize>>>;

fn draw_swaps(cfg: &SceneConfig) -> (SourceTable, Vec<NoiseEvent>) {
    let mut rng = stream(cfg.seed, 4);
    let (n, t_max, p) = (cfg.people, cfg.frames, cfg.swap_persistence);
    let mut table = vec![vec![(0..n).collect::<Vec<usize>>(); t_max]; cfg.views];
    let mut events = Vec::new();
    for (v, view_table) in table.iter_mut().enumerate() {
        let phase = rng.random_range(0..p);
        // Block k covers frames [phase + (k-1)p, phase + kp); block 0 holds frame 0 and stays clean.
        let mut start = phase;
        while start < t_max {
            let end = (start + p).min(t_max) - 1;
            let corrupt = rng.random_bool(cfg.swap_rate);
            let i = rng.random_range(0..n.max(2));
            let j = (i + 1 + rng.random_range(0..n.max(2) - 1)) % n.max(2);
            if corrupt && n >= 2 && start > 0 {
                let (a, b) = (i.min(j), i.max(j));
                for row in &mut view_table[start..=end] {
                    row.swap(a, b);
                }
                events.push(NoiseEvent { kind: EventKind::Swap, view: v, frames: [start, end], persons: vec![a, b] });
            }
            start += p;
        }
    }
    (table, events)
}

/// Generates a full synthetic scene.
pub fn generate(cfg: &SceneConfig) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let template = BodyTemplate::default();
    let cameras = make_cameras(cfg);
    let cameras_unknown = perturb_cameras(&cameras, cfg.perturb_angle_deg, cfg.perturb_baseline, cfg.seed);

    let mut rng = stream(cfg.seed, 3);
    let offset = rng.random_range(0.0..TAU);
    let people: Vec<PersonTruth> = (0..cfg.people)
        .map(|n| {
            let a = offset + TAU * n as f64 / cfg.people as f64;
            let spread = if cfg.people == 1 { 0.0 } else { cfg.person_spread };
            let walker = Walker::random(&mut rng, Vector2::new(a.cos(), a.sin()) * spread);
            let params: Vec<_> = (0..cfg.frames).map(|t| walker.params(t, cfg.frames, cfg.fps)).collect();
            let mut clip = params_to_sequence(&template, &params).expect("consistent walker parameters");
            clip.fps = cfg.fps;
            let joints = params.iter().map(|p| forward_kinematics(&template, p).iter().map(|j| [j.x, j.y, j.z]).collect()).collect();
            PersonTruth { track_id: n, clip, joints }
        })
        .collect();

    let mut projections = Vec::with_capacity(cfg.frames * cfg.views * cfg.people);
    let mut clean: BTreeMap<(usize, usize, usize), (Vec<Pixel>, Vec<f64>)> = BTreeMap::new();
    for t in 0..cfg.frames {
        for cam in &cameras {
            for person in &people {
                let joints: Vec<Point3> = (0..NUM_JOINTS).map(|j| person.joint(t, j)).collect();
                let (px, conf) = project_all(cam, &joints);
                projections.push(TrackedPose2D::new(cam.id, t, person.track_id, px.clone(), conf.clone()));
                clean.insert((t, cam.id, person.track_id), (px, conf));
            }
        }
    }

    let (sources, mut events) = draw_swaps(cfg);
    let mut jitter_rng = stream(cfg.seed, 5);
    let mut drop_rng = stream(cfg.seed, 6);
    let normal = Normal::new(0.0, cfg.jitter_px.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut observations = Vec::with_capacity(projections.len());
    let mut dropped: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in 0..cfg.frames {
        for v in 0..cfg.views {
            for n in 0..cfg.people {
                let src = sources[v][t][n];
                let (px, conf) = &clean[&(t, v, src)];
                let mut joints = Vec::with_capacity(NUM_JOINTS);
                let mut confidence = Vec::with_capacity(NUM_JOINTS);
                for (p, c) in px.iter().zip(conf) {
                    let d = Vector2::new(normal.sample(&mut jitter_rng), normal.sample(&mut jitter_rng));
                    if cfg.jitter_px > 0.0 {
                        joints.push(p + d);
                        confidence.push(if *c > 0.0 { (-d.norm() / cfg.jitter_px).exp().clamp(0.05, 1.0) } else { 0.0 });
                    } else {
                        joints.push(*p);
                        confidence.push(*c);
                    }
                }
                if drop_rng.random_bool(cfg.dropout_rate) {
                    dropped.entry((v, n)).or_default().push(t);
                    continue;
                }
                observations.push(TrackedPose2D::new(v, t, n, joints, confidence));
            }
        }
    }
    for ((v, n), frames) in dropped {
        let mut run_start = frames[0];
        for w in 0..frames.len() {
            let last = w + 1 == frames.len() || frames[w + 1] != frames[w] + 1;
            if last {
                events.push(NoiseEvent { kind: EventKind::Dropout, view: v, frames: [run_start, frames[w]], persons: vec![n] });
                if w + 1 < frames.len() {
                    run_start = frames[w + 1];
                }
            }
        }
    }
    events.sort_by(|a, b| (a.view, a.frames, a.kind as u8).cmp(&(b.view, b.frames, b.kind as u8)).then(a.persons.cmp(&b.persons)));

    let truth = GroundTruth { config: cfg.clone(), cameras, cameras_unknown, people, projections, events };
    Ok(Scene { truth, observations, template })
}

/// Track ids whose record at `(view, frame)` shows another person.
pub fn swapped_tracks(events: &[NoiseEvent], view: usize, frame: usize) -> Vec<usize> {
    events.iter().filter(|e| e.kind == EventKind::Swap && e.covers(view, frame)).flat_map(|e| e.persons.iter().copied()).collect()
}

/// Applies the logged swaps to a set of records (swaps are involutions, so
/// this also undoes them).
pub fn apply_swaps(records: &mut [TrackedPose2D], events: &[NoiseEvent]) {
    let mut index: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        index.insert((r.view_id, r.frame, r.track_id), i);
    }
    for e in events.iter().filter(|e| e.kind == EventKind::Swap) {
        for f in e.frames[0]..=e.frames[1] {
            let (a, b) = (index.get(&(e.view, f, e.persons[0])), index.get(&(e.view, f, e.persons[1])));
            if let (Some(&a), Some(&b)) = (a, b) {
                let (ja, ca) = (records[a].joints.clone(), records[a].confidence.clone());
                records[a].joints = records[b].joints.clone();
                records[a].confidence = records[b].confidence.clone();
                records[b].joints = ja;
                records[b].confidence = ca;
            }
        }
    }
}

/// Counts of corrupted and clean records removed by a detection filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterScore {
    pub corrupted: usize,
    pub corrupted_excluded: usize,
    pub clean: usize,
    pub clean_excluded: usize,
}

impl FilterScore {
    pub fn exclusion_rate(&self) -> f64 {
        if self.corrupted == 0 {
            1.0
        } else {
            self.corrupted_excluded as f64 / self.corrupted as f64
        }
    }

    pub fn false_rejection_rate(&self) -> f64 {
        if self.clean == 0 {
            0.0
        } else {
            self.clean_excluded as f64 / self.clean as f64
        }
    }
}

/// Scores `kept(view, frame, track)` against the swap log: a record is
/// corrupted when a swap event covers its view and frame and names its track.
pub fn score_filter(observations: &[TrackedPose2D], events: &[NoiseEvent], kept: impl Fn(usize, usize, usize) -> bool) -> FilterScore {
    let mut s = FilterScore::default();
    for r in observations {
        let excluded = !kept(r.view_id, r.frame, r.track_id);
        if swapped_tracks(events, r.view_id, r.frame).contains(&r.track_id) {
            s.corrupted += 1;
            s.corrupted_excluded += usize::from(excluded);
        } else {
            s.clean += 1;
            s.clean_excluded += usize::from(excluded);
        }
    }
    s
}

pub const POSES_FILE: &str = "poses2d.json";
pub const CAMERAS_FILE: &str = "cameras.json";
pub const CAMERAS_UNKNOWN_FILE: &str = "cameras_unknown.json";
pub const BODYMODEL_FILE: &str = "bodymodel.json";
pub const EVENTS_FILE: &str = "events.json";
pub const MOTION_FILE: &str = "motion_gt.json";
pub const SCENE_FILE: &str = "scene.json";

/// Writes all scene files into `dir`.
pub fn export(scene: &Scene, dir: &Path) -> Result<(), SynthError> {
    let t = &scene.truth;
    write_json(&dir.join(POSES_FILE), &scene.observations)?;
    write_json(&dir.join(CAMERAS_FILE), &t.cameras)?;
    write_json(&dir.join(CAMERAS_UNKNOWN_FILE), &t.cameras_unknown)?;
    write_json(&dir.join(BODYMODEL_FILE), &scene.template)?;
    write_json(&dir.join(EVENTS_FILE), &t.events)?;
    write_json(&dir.join(MOTION_FILE), &t.people)?;
    write_json(&dir.join(SCENE_FILE), &t.config)?;
    Ok(())
}

/// Ground-truth cameras and motions exported by [`export`].
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub cameras: Vec<Camera>,
    pub people: Vec<PersonTruth>,
    pub events: Vec<NoiseEvent>,
}

pub fn load_ground_truth(dir: &Path) -> Result<SceneFiles, SynthError> {
    Ok(SceneFiles {
        cameras: read_cameras(&dir.join(CAMERAS_FILE))?,
        people: read_json(&dir.join(MOTION_FILE))?,
        events: read_json(&dir.join(EVENTS_FILE))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_poses;

    fn small(seed: u64) -> SceneConfig {
        SceneConfig { frames: 60, seed, ..SceneConfig::default() }
    }

    #[test]
    fn noiseless_observations_equal_projections() {
        let cfg = SceneConfig { jitter_px: 0.0, swap_rate: 0.0, dropout_rate: 0.0, ..small(1) };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.observations, s.truth.projections);
        assert!(s.truth.events.is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate(&small(7)).unwrap();
        let b = generate(&small(7)).unwrap();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.truth.events, b.truth.events);
        assert_eq!(a.truth.people, b.truth.people);
        let c = generate(&small(8)).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn stripping_logged_corruptions_recovers_projections() {
        let cfg = SceneConfig { jitter_px: 0.0, swap_rate: 0.3, dropout_rate: 0.05, ..small(3) };
        let s = generate(&cfg).unwrap();
        assert!(s.truth.events.iter().any(|e| e.kind == EventKind::Swap));
        assert!(s.truth.events.iter().any(|e| e.kind == EventKind::Dropout));
        let obs = &s.observations;
        let proj: BTreeMap<_, _> = s.truth.projections.iter().map(|p| ((p.view_id, p.frame, p.track_id), p)).collect();
        for o in obs {
            let swap = s
                .truth
                .events
                .iter()
                .find(|e| e.kind == EventKind::Swap && e.covers(o.view_id, o.frame) && e.persons.contains(&o.track_id));
            let src = swap.map_or(o.track_id, |e| e.persons[0] + e.persons[1] - o.track_id);
            let p = proj[&(o.view_id, o.frame, src)];
            assert_eq!((&o.joints, &o.confidence), (&p.joints, &p.confidence));
        }
        let present: std::collections::BTreeSet<_> = obs.iter().map(|o| (o.view_id, o.frame, o.track_id)).collect();
        for p in &s.truth.projections {
            let key = (p.view_id, p.frame, p.track_id);
            let logged = s
                .truth
                .events
                .iter()
                .any(|e| e.kind == EventKind::Dropout && e.covers(p.view_id, p.frame) && e.persons == vec![p.track_id]);
            assert_eq!(!present.contains(&key), logged, "{key:?}");
        }
        // Swaps are involutions.
        let mut twice = s.observations.clone();
        apply_swaps(&mut twice, &s.truth.events);
        apply_swaps(&mut twice, &s.truth.events);
        assert_eq!(twice, s.observations);
    }

    #[test]
    fn first_frame_is_never_swapped() {
        for seed in 0..10 {
            let s = generate(&SceneConfig { swap_rate: 0.9, ..small(seed) }).unwrap();
            assert!(s.truth.events.iter().all(|e| e.frames[0] > 0));
        }
    }

    #[test]
    fn swapped_block_fraction_matches_binomial_expectation() {
        // Each eligible block is corrupted independently with probability q.
        let q = 0.05;
        let (mut corrupted, mut eligible) = (0usize, 0usize);
        for seed in 0..10 {
            let cfg = SceneConfig { swap_rate: q, frames: 200, ..small(100 + seed) };
            let s = generate(&cfg).unwrap();
            corrupted += s.truth.events.iter().filter(|e| e.kind == EventKind::Swap).count();
            // Blocks start at phase, phase + p, ... < T; all of them are eligible (phase ≥ 1) except a block at frame 0.
            let mut rng = stream(cfg.seed, 4);
            for _ in 0..cfg.views {
                let phase = rng.random_range(0..cfg.swap_persistence);
                let mut start = phase;
                while start < cfg.frames {
                    eligible += usize::from(start > 0);
                    let _ = (rng.random_bool(q), rng.random_range(0..cfg.people), rng.random_range(0..cfg.people - 1));
                    start += cfg.swap_persistence;
                }
            }
        }
        let mean = q * eligible as f64;
        let sd = (eligible as f64 * q * (1.0 - q)).sqrt();
        assert!((corrupted as f64 - mean).abs() <= 3.0 * sd, "{corrupted} vs {mean} ± {sd}");
    }

    #[test]
    fn export_and_ingest_round_trip() {
        let s = generate(&small(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export(&s, dir.path()).unwrap();
        assert_eq!(read_poses(&dir.path().join(POSES_FILE)).unwrap(), s.observations);
        let gt = load_ground_truth(dir.path()).unwrap();
        assert_eq!(gt.cameras, s.truth.cameras);
        assert_eq!(gt.people, s.truth.people);
        assert_eq!(gt.events, s.truth.events);
    }

    #[test]
    fn truth_cameras_reproject_motion_exactly_and_perturbation_is_as_configured() {
        let s = generate(&small(6)).unwrap();
        for p in &s.truth.projections {
            let cam = &s.truth.cameras[p.view_id];
            let person = &s.truth.people[p.track_id];
            for j in 0..NUM_JOINTS {
                assert_eq!(cam.project(&person.joint(p.frame, j)).unwrap(), p.joints[j]);
            }
        }
        let c0 = s.truth.cameras[0].extrinsics.center();
        for (a, b) in s.truth.cameras.iter().zip(&s.truth.cameras_unknown).skip(1) {
            let ang = so3::angle_between(&a.extrinsics.rotation_matrix(), &b.extrinsics.rotation_matrix());
            assert!((ang.to_degrees() - 5.0).abs() < 1e-9);
            let moved = (a.extrinsics.center() - b.extrinsics.center()).norm();
            assert!((moved / (a.extrinsics.center() - c0).norm() - 0.05).abs() < 1e-9);
        }
        assert_eq!(s.truth.cameras[0], s.truth.cameras_unknown[0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SceneConfig { views: 1, ..small(0) },
            SceneConfig { swap_rate: 1.5, ..small(0) },
            SceneConfig { swap_persistence: 0, ..small(0) },
        ] {
            assert!(matches!(generate(&cfg), Err(SynthError::ConfigInvalid(_))));
        }
    }
}
