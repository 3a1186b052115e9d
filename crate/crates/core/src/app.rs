//! File-level operations behind each command-line subcommand. Every function
//! reads only its declared inputs and writes only into `out`.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bodymodel::{BodyTemplate, MotionClip, MotionSequence};
use crate::denoise::denoise_sequence;
use crate::eval::{evaluate, render_plots, EvalError, Metrics, PersonEstimate, PlotInput};
use crate::geometry::{Camera, Point3, ViewInitReport};
use crate::io::{read_cameras, read_json, read_poses, read_text, write_json, IoError};
use crate::pipeline::{initialize_cameras, run, CameraSource, PipelineConfig, PipelineError, PipelineResult, PriorKind};
use crate::prior::{load_weights_file, train_linear_backend, PriorBackend, PriorError};
use crate::synth::{export, generate, load_ground_truth, SceneConfig, SynthError};

pub const RESULT_FILE: &str = "result.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FILTERED_FILE: &str = "poses2d_filtered.json";
pub const DENOISE_REPORT_FILE: &str = "denoise_report.json";
pub const INIT_CAMERAS_FILE: &str = "cameras_init.json";
pub const INIT_REPORT_FILE: &str = "init_report.json";
pub const PRIOR_FILE: &str = "prior.weights";

#[derive(Debug, Error)]
pub enum AppError {
    /// Bad config, flags or missing inputs.
    #[error("{0}")]
    Invalid(String),
    #[error("input {0}")]
    Input(IoError),
    #[error("output {0}")]
    Output(IoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Eval(EvalError),
    #[error(transparent)]
    Synth(SynthError),
}

impl AppError {
    /// 1 for validation problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) | Self::Input(_) => 1,
            Self::Pipeline(PipelineError::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(io) => Self::Output(io),
            other => Self::Eval(other),
        }
    }
}

fn input<T>(r: Result<T, IoError>) -> Result<T, AppError> {
    r.map_err(AppError::Input)
}

fn output<T>(r: Result<T, IoError>) -> Result<T, AppError> {
    r.map_err(AppError::Output)
}

/// Reads a TOML pipeline config, or the defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, AppError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = input(read_text(p))?;
            PipelineConfig::from_toml(&text).map_err(|e| AppError::Invalid(format!("{}: {e}", p.display())))
        }
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Inputs of the reconstruction stages, read from `dir` per `cfg.paths`.
pub struct Inputs {
    pub observations: Vec<crate::pose2d::TrackedPose2D>,
    pub cameras: Vec<Camera>,
    pub template: BodyTemplate,
}

pub fn read_inputs(dir: &Path, cfg: &PipelineConfig) -> Result<Inputs, AppError> {
    let observations = input(read_poses(&resolve(dir, &cfg.paths.poses2d)))?;
    let cameras = input(read_cameras(&resolve(dir, &cfg.paths.cameras)))?;
    let template = match &cfg.paths.bodymodel {
        Some(p) => input(read_json(&resolve(dir, p)))?,
        None => BodyTemplate::default(),
    };
    Ok(Inputs { observations, cameras, template })
}

/// The motion prior: a weights file if given, else the built-in linear one.
pub fn load_prior(cfg: &PipelineConfig, dir: Option<&Path>) -> Result<PriorBackend, AppError> {
    let weights = cfg.paths.prior_weights.as_ref().map(|p| match dir {
        Some(d) => resolve(d, p),
        None => p.clone(),
    });
    match (cfg.prior.kind, weights) {
        (_, Some(path)) => {
            if !path.exists() {
                return Err(AppError::Invalid(format!("prior weights {} not found", path.display())));
            }
            let p = load_weights_file(&path)?;
            if cfg.prior.kind == PriorKind::Vae && !matches!(p, PriorBackend::Gru(_)) {
                return Err(AppError::Invalid(format!("{} does not hold VAE weights", path.display())));
            }
            Ok(p)
        }
        (PriorKind::Vae, None) => Err(AppError::Invalid("the vae prior needs a weights file".into())),
        (PriorKind::Linear, None) => Ok(cfg.prior.builtin_linear()?),
    }
}

/// Generates a synthetic scene and exports it.
pub fn synth(scene: &SceneConfig, out: &Path) -> Result<(), AppError> {
    scene.validate().map_err(|e| AppError::Invalid(e.to_string()))?;
    let s = generate(scene).map_err(AppError::Synth)?;
    export(&s, out).map_err(|e| match e {
        SynthError::Io(io) => AppError::Output(io),
        other => AppError::Synth(other),
    })?;
    info!("wrote a {}-person, {}-view, {}-frame scene", scene.people, scene.views, scene.frames);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitOutput {
    pub metric_scale: f64,
    pub views: Vec<ViewInitReport>,
}

/// Initializes the cameras and writes them with a per-view report.
pub fn init_cameras(dir: &Path, cfg: &PipelineConfig, out: &Path) -> Result<(), AppError> {
    let inp = read_inputs(dir, cfg)?;
    let (cams, views, metric_scale) = initialize_cameras(&inp.observations, &inp.cameras, &inp.template, cfg)?;
    output(write_json(&out.join(INIT_CAMERAS_FILE), &cams))?;
    output(write_json(&out.join(INIT_REPORT_FILE), &InitOutput { metric_scale, views }))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseOutput {
    pub records_in: usize,
    pub records_kept: usize,
    pub decisions: Vec<crate::denoise::FrameDecision>,
}

/// Initializes the cameras, then writes the filtered detections.
pub fn denoise(dir: &Path, cfg: &PipelineConfig, out: &Path) -> Result<(), AppError> {
    let inp = read_inputs(dir, cfg)?;
    let (cams, _, _) = initialize_cameras(&inp.observations, &inp.cameras, &inp.template, cfg)?;
    let d = denoise_sequence(&inp.observations, &cams, &cfg.denoise).map_err(PipelineError::from)?;
    output(write_json(&out.join(FILTERED_FILE), &d.filtered))?;
    let report = DenoiseOutput { records_in: inp.observations.len(), records_kept: d.filtered.len(), decisions: d.decisions };
    output(write_json(&out.join(DENOISE_REPORT_FILE), &report))?;
    Ok(())
}

/// Fits a linear prior to motion clip files in `data` (every `*.json` holding
/// a motion clip or a bare motion sequence), or to the built-in synthetic
/// corpus when `data` is `None`, and writes `prior.weights`.
pub fn train_prior(data: Option<&Path>, cfg: &PipelineConfig, out: &Path) -> Result<(), AppError> {
    let backend = match data {
        None => cfg.prior.builtin_linear()?,
        Some(dir) => {
            let clips = read_clips(dir)?;
            PriorBackend::Linear(train_linear_backend(&clips, cfg.prior.latent_dim)?)
        }
    };
    backend.save(&out.join(PRIOR_FILE)).map_err(|e| match e {
        PriorError::Io(m) => AppError::Output(IoError::Parse { path: out.join(PRIOR_FILE), message: m }),
        other => AppError::Prior(other),
    })?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClipFile {
    Clip(MotionClip),
    Sequence(MotionSequence),
}

fn read_clips(dir: &Path) -> Result<Vec<MotionSequence>, AppError> {
    let entries = std::fs::read_dir(dir).map_err(|source| AppError::Input(IoError::Fs { path: dir.to_path_buf(), source }))?;
    let mut paths: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    if paths.is_empty() {
        return Err(AppError::Invalid(format!("{}: no motion clip files", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            Ok(match input(read_json::<ClipFile>(p))? {
                ClipFile::Clip(c) => c.motion,
                ClipFile::Sequence(s) => s,
            })
        })
        .collect()
}

/// Runs the full reconstruction and writes `result.json`.
pub fn optimize(dir: &Path, cfg: &PipelineConfig, out: &Path) -> Result<PipelineResult, AppError> {
    let inp = read_inputs(dir, cfg)?;
    let prior = load_prior(cfg, Some(dir))?;
    let result = run(&inp.observations, &inp.cameras, &inp.template, &prior, cfg)?;
    output(write_json(&out.join(RESULT_FILE), &result))?;
    Ok(result)
}

pub fn read_result(dir: &Path) -> Result<PipelineResult, AppError> {
    input(read_json(&dir.join(RESULT_FILE)))
}

/// Scores a result against an exported synthetic scene and writes `metrics.json`.
pub fn eval(result_dir: &Path, gt_dir: &Path, out: &Path) -> Result<Metrics, AppError> {
    let result = read_result(result_dir)?;
    let gt = load_ground_truth(gt_dir).map_err(|e| match e {
        SynthError::Io(io) => AppError::Input(io),
        other => AppError::Synth(other),
    })?;
    let est: Vec<_> = result.cameras.iter().map(|c| c.extrinsics).collect();
    let people: Vec<PersonEstimate> = result
        .people
        .iter()
        .map(|p| PersonEstimate { track_id: p.track_id, first_frame: p.first_frame, joints: p.joint_points() })
        .collect();
    let gt_joints: Vec<(usize, Vec<Vec<Point3>>)> = gt
        .people
        .iter()
        .map(|p| (p.track_id, p.joints.iter().map(|f| f.iter().map(|j| Point3::new(j[0], j[1], j[2])).collect()).collect()))
        .collect();
    let allow_scale = result.report.camera_source == CameraSource::Epipolar;
    let metrics = evaluate(&est, &people, &gt.cameras, &gt_joints, allow_scale, 0.5)?;
    output(write_json(&out.join(METRICS_FILE), &metrics))?;
    Ok(metrics)
}

/// Writes the three SVG plots for a result; ground-truth root paths are
/// overlaid when `gt_dir` is given.
pub fn render(result_dir: &Path, gt_dir: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>, AppError> {
    let result = read_result(result_dir)?;
    let roots = |joints: &[Vec<[f64; 3]>]| joints.iter().map(|f| Point3::new(f[0][0], f[0][1], f[0][2])).collect::<Vec<_>>();
    let mut input_plot = PlotInput {
        cameras: result.cameras.clone(),
        trajectories: result.people.iter().map(|p| (p.track_id, roots(&p.joints))).collect(),
        reference: vec![],
        trace: result.report.optimizer.trace(),
    };
    if let Some(g) = gt_dir {
        let gt = load_ground_truth(g).map_err(|e| match e {
            SynthError::Io(io) => AppError::Input(io),
            other => AppError::Synth(other),
        })?;
        // Draw everything in the ground-truth frame.
        let est: Vec<_> = result.cameras.iter().map(|c| c.extrinsics).collect();
        let gt_ext: Vec<_> = gt.cameras.iter().map(|c| c.extrinsics).collect();
        let al = crate::eval::rigid_align(&est, &gt_ext, result.report.camera_source == CameraSource::Epipolar)?;
        for (c, e) in input_plot.cameras.iter_mut().zip(&al.aligned) {
            c.extrinsics = *e;
        }
        for (_, t) in input_plot.trajectories.iter_mut() {
            for p in t.iter_mut() {
                *p = al.transform.apply(p);
            }
        }
        input_plot.reference = gt.people.iter().map(|p| (p.track_id, roots(&p.joints))).collect();
    }
    Ok(render_plots(&input_plot, out)?)
}
