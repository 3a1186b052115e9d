//! End-to-end reconstruction: camera initialization, metric scale, 2D pose
//! filtering, warm start and joint refinement.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bodymodel::{forward_kinematics_matrices, BodyTemplate, MotionClip, NUM_JOINTS};
use crate::denoise::{denoise_sequence, DenoiseConfig, DenoiseError};
use crate::geometry::{init_all_cameras, triangulate_records, Camera, GeometryError, InitConfig, Point3, ViewInitReport};
use crate::optimizer::{
    bone_length_scale, initialize_person, solve, OptimizerConfig, OptimizerError, Problem, SceneVariables, SolveReport,
};
use crate::pose2d::TrackedPose2D;
use crate::prior::{train_linear_backend, PriorBackend, PriorError};
use crate::synth::{motion_corpus, SceneConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("no observations")]
    NoObservations,
    #[error("camera initialization failed: {0}")]
    Geometry(#[from] GeometryError),
    #[error("could not fix the metric scale: no bone is triangulated in the first frame")]
    NoMetricScale,
    #[error("no person has enough frames to optimize")]
    NoPeople,
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Where the starting extrinsics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraSource {
    /// Relative poses to view 0 from first-frame correspondences.
    Epipolar,
    /// Extrinsics given with the input cameras.
    Provided,
}

/// Input file names, relative to the input directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub poses2d: PathBuf,
    pub cameras: PathBuf,
    pub bodymodel: Option<PathBuf>,
    pub prior_weights: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self { poses2d: "poses2d.json".into(), cameras: "cameras_unknown.json".into(), bodymodel: None, prior_weights: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Linear,
    Vae,
}

/// How the built-in linear prior is fitted when no weights file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    pub kind: PriorKind,
    pub latent_dim: usize,
    pub corpus_clips: usize,
    pub corpus_frames: usize,
    pub corpus_seed: u64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self { kind: PriorKind::Linear, latent_dim: 32, corpus_clips: 24, corpus_frames: 120, corpus_seed: 1234 }
    }
}

impl PriorSettings {
    /// Linear prior fitted to synthetic walking motions.
    pub fn builtin_linear(&self) -> Result<PriorBackend, PriorError> {
        let clips = motion_corpus(self.corpus_clips, self.corpus_frames, 30.0, self.corpus_seed);
        Ok(PriorBackend::Linear(train_linear_backend(&clips, self.latent_dim)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds every randomized stage (RANSAC, synthetic scenes).
    pub seed: u64,
    /// Worker threads; `None` uses the environment or all cores.
    pub threads: Option<usize>,
    pub camera_source: CameraSource,
    pub paths: Paths,
    pub prior: PriorSettings,
    pub init: InitConfig,
    pub denoise: DenoiseConfig,
    pub optimizer: OptimizerConfig,
    pub scene: SceneConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            camera_source: CameraSource::Epipolar,
            paths: Paths::default(),
            prior: PriorSettings::default(),
            init: InitConfig::default(),
            denoise: DenoiseConfig::default(),
            optimizer: OptimizerConfig::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.denoise.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.optimizer.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.scene.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if self.threads == Some(0) {
            return Err(PipelineError::InvalidConfig("threads must be at least 1".into()));
        }
        if self.prior.latent_dim == 0 {
            return Err(PipelineError::InvalidConfig("prior.latent_dim must be positive".into()));
        }
        Ok(())
    }

    /// RANSAC settings with the pipeline seed applied.
    fn init_config(&self) -> InitConfig {
        let mut c = self.init;
        c.ransac.seed = self.seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonResult {
    pub track_id: usize,
    pub first_frame: usize,
    pub clip: MotionClip,
    /// `[frame][joint]` world positions, mm.
    pub joints: Vec<Vec<[f64; 3]>>,
}

impl PersonResult {
    pub fn joint_points(&self) -> Vec<Vec<Point3>> {
        self.joints.iter().map(|f| f.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSummary {
    pub records_in: usize,
    pub records_kept: usize,
    pub tracks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub camera_source: CameraSource,
    pub prior_backend: String,
    pub init: Vec<ViewInitReport>,
    /// Factor applied to the epipolar translations to reach millimeters.
    pub metric_scale: f64,
    pub denoise: DenoiseSummary,
    /// Tracks dropped for having too few frames.
    pub skipped_tracks: Vec<usize>,
    pub optimizer: SolveReport,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub cameras: Vec<Camera>,
    pub people: Vec<PersonResult>,
    pub report: PipelineReport,
}

/// Starting cameras in millimeters, per-view reports and the metric scale
/// factor. Epipolar initialization uses the earliest frame; its unit-baseline
/// translations are rescaled so the triangulated bones match the template.
pub fn initialize_cameras(
    observations: &[TrackedPose2D],
    cameras: &[Camera],
    template: &BodyTemplate,
    cfg: &PipelineConfig,
) -> Result<(Vec<Camera>, Vec<ViewInitReport>, f64), PipelineError> {
    let first = observations.iter().map(|r| r.frame).min().ok_or(PipelineError::NoObservations)?;
    let intrinsics: Vec<_> = cameras.iter().map(|c| c.intrinsics).collect();
    let (mut cams, reports, scale) = match cfg.camera_source {
        CameraSource::Provided => {
            let reports = cameras
                .iter()
                .map(|c| ViewInitReport {
                    view: c.id,
                    initialized: c.initialized,
                    inliers: 0,
                    correspondences: 0,
                    mean_sampson_px: None,
                    error: None,
                })
                .collect();
            (cameras.to_vec(), reports, 1.0)
        }
        CameraSource::Epipolar => {
            let frame0: Vec<TrackedPose2D> = observations.iter().filter(|r| r.frame == first).cloned().collect();
            let ci = init_all_cameras(&frame0, &intrinsics, &cfg.init_config())?;
            let mut cams = ci.cameras;
            let points = triangulate_records(&frame0, &cams, cfg.init.min_confidence);
            let mut skeletons: BTreeMap<usize, Vec<Option<Point3>>> = BTreeMap::new();
            for ((track, j), p) in points {
                skeletons.entry(track).or_insert_with(|| vec![None; NUM_JOINTS])[j] = Some(p);
            }
            let s = bone_length_scale(template, skeletons.values().map(|v| v.as_slice())).ok_or(PipelineError::NoMetricScale)?;
            for c in cams.iter_mut() {
                c.extrinsics.translation *= s;
            }
            info!("metric scale {s:.3} mm per baseline unit");
            (cams, ci.reports, s)
        }
    };
    if let Some(c) = cams.first_mut() {
        c.initialized = true;
    }
    Ok((cams, reports, scale))
}

/// Runs every stage on `observations`. Only the intrinsics of `cameras` are
/// used unless the config asks for the provided extrinsics.
pub fn run(
    observations: &[TrackedPose2D],
    cameras: &[Camera],
    template: &BodyTemplate,
    prior: &PriorBackend,
    cfg: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    cfg.validate()?;
    let intrinsics: Vec<_> = cameras.iter().map(|c| c.intrinsics).collect();
    let (cams, init, metric_scale) = initialize_cameras(observations, cameras, template, cfg)?;

    let den = denoise_sequence(observations, &cams, &cfg.denoise)?;
    info!("consistency filter kept {} of {} records", den.filtered.len(), observations.len());

    let mut people = Vec::new();
    let mut skipped = Vec::new();
    for (&track, traj) in &den.trajectories {
        match initialize_person(template, prior, track, traj) {
            Ok(p) => people.push(p),
            Err(OptimizerError::InsufficientData { .. }) => {
                warn!("track {track}: too few frames, skipped");
                skipped.push(track);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if people.is_empty() {
        return Err(PipelineError::NoPeople);
    }
    let vars = SceneVariables { people, cameras: cams.iter().map(|c| c.extrinsics).collect(), scale: 1.0 };
    let frozen: Vec<bool> = cams.iter().map(|c| !c.initialized).collect();
    let problem = Problem::new(template, prior, intrinsics.clone(), &vars, &den.filtered, &cfg.optimizer)?;
    let solved = solve(&problem, &vars, &cfg.optimizer, &frozen)?;

    let out_cams: Vec<Camera> =
        solved.variables.effective_cameras().into_iter().zip(&cams).map(|(e, c)| Camera { extrinsics: e, ..*c }).collect();
    let mut out_people = Vec::new();
    for p in &solved.variables.people {
        let motion = prior.decode(&p.z)?;
        let offsets = template.shaped_offsets(&p.beta);
        let mut joints = Vec::with_capacity(p.frames());
        for t in 0..p.frames() {
            let locals = motion.local_matrices(t).map_err(OptimizerError::from)?;
            let posed =
                forward_kinematics_matrices(template, &offsets, &locals, &crate::geometry::so3::exp(&p.rotation[t]), &p.translation[t]);
            joints.push(posed.positions.iter().map(|x| [x.x, x.y, x.z]).collect());
        }
        out_people.push(PersonResult {
            track_id: p.track_id,
            first_frame: p.first_frame,
            clip: MotionClip { fps: cfg.scene.fps, beta: p.beta, rotation: p.rotation.clone(), translation: p.translation.clone(), motion },
            joints,
        });
    }
    Ok(PipelineResult {
        cameras: out_cams,
        people: out_people,
        report: PipelineReport {
            camera_source: cfg.camera_source,
            prior_backend: prior.name().to_string(),
            init,
            metric_scale,
            denoise: DenoiseSummary {
                records_in: observations.len(),
                records_kept: den.filtered.len(),
                tracks: den.trajectories.keys().copied().collect(),
            },
            skipped_tracks: skipped,
            optimizer: solved.report,
        },
    })
}
