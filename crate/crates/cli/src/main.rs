use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use uncalmocap::app::{self, AppError};
use uncalmocap::pipeline::{PipelineConfig, PriorKind};
use uncalmocap::synth::SceneConfig;

const THREADS_ENV: &str = "UNCALMOCAP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "uncalmocap", version, about = "Multi-person motion capture and camera calibration from 2D poses")]
struct Cli {
    /// Repeat for more detail (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads (falls back to UNCALMOCAP_THREADS, then the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PriorArg {
    Linear,
    Vae,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter identity errors out of the 2D poses.
    Denoise {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Initialize extrinsics from the first frame.
    InitCameras {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a linear motion prior and write prior.weights.
    TrainPrior {
        #[command(flatten)]
        common: Common,
        /// Directory of motion clip JSON files; defaults to a built-in synthetic corpus.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full reconstruction and write result.json.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        prior: Option<PriorArg>,
        /// Prior weights archive.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Score a result against a synthetic scene and write metrics.json.
    Eval {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Defaults to the result directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write trajectory, frusta and objective plots.
    Render {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(common: &Common) -> Result<PipelineConfig, AppError> {
    let mut cfg = app::load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.scene.seed = s;
    }
    Ok(cfg)
}

/// Scene settings for `synth`: a `[scene]` table of a pipeline config, or a
/// bare scene config file.
fn scene_config(common: &Common) -> Result<SceneConfig, AppError> {
    let mut scene = match &common.config {
        None => SceneConfig::default(),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|source| AppError::Input(uncalmocap::io::IoError::Fs { path: p.clone(), source }))?;
            let value: toml::Table = text.parse().map_err(|e| AppError::Invalid(format!("{}: {e}", p.display())))?;
            if value.contains_key("scene") {
                app::load_config(Some(p))?.scene
            } else {
                toml::from_str(&text).map_err(|e| AppError::Invalid(format!("{}: {e}", p.display())))?
            }
        }
    };
    if let Some(s) = common.seed {
        scene.seed = s;
    }
    Ok(scene)
}

fn threads(flag: Option<usize>, cfg: Option<usize>) -> Result<Option<usize>, AppError> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v.parse().map(Some).map_err(|_| AppError::Invalid(format!("{THREADS_ENV}={v} is not a thread count")));
    }
    Ok(cfg)
}

/// Runs `f` against a scratch directory next to `out` and moves its files
/// into `out` only on success, so failures leave nothing behind.
fn staged<T>(out: &Path, f: impl FnOnce(&Path) -> Result<T, AppError>) -> Result<T, AppError> {
    let io = |path: &Path, source| AppError::Output(uncalmocap::io::IoError::Fs { path: path.to_path_buf(), source });
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| io(&parent, e))?;
    let stage = tempfile::Builder::new().prefix(".uncalmocap-stage-").tempdir_in(&parent).map_err(|e| io(&parent, e))?;
    let value = f(stage.path())?;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(stage.path()).map_err(|e| io(stage.path(), e))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for src in entries {
        let dst = out.join(src.file_name().expect("directory entries have names"));
        std::fs::rename(&src, &dst).map_err(|e| io(&dst, e))?;
    }
    Ok(value)
}

fn execute(cli: Cli) -> Result<(), AppError> {
    let cfg_threads = match &cli.command {
        Command::Denoise { common, .. }
        | Command::InitCameras { common, .. }
        | Command::Optimize { common, .. }
        | Command::TrainPrior { common, .. } => config(common)?.threads,
        _ => None,
    };
    if let Some(n) = threads(cli.threads, cfg_threads)? {
        if n == 0 {
            return Err(AppError::Invalid("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| AppError::Invalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { common, out } => {
            let scene = scene_config(&common)?;
            staged(&out, |d| app::synth(&scene, d))
        }
        Command::Denoise { common, input, out } => {
            let cfg = config(&common)?;
            staged(&out, |d| app::denoise(&input, &cfg, d))
        }
        Command::InitCameras { common, input, out } => {
            let cfg = config(&common)?;
            staged(&out, |d| app::init_cameras(&input, &cfg, d))
        }
        Command::TrainPrior { common, data, out } => {
            let cfg = config(&common)?;
            staged(&out, |d| app::train_prior(data.as_deref(), &cfg, d))
        }
        Command::Optimize { common, input, out, prior, weights } => {
            let mut cfg = config(&common)?;
            if let Some(p) = prior {
                cfg.prior.kind = match p {
                    PriorArg::Linear => PriorKind::Linear,
                    PriorArg::Vae => PriorKind::Vae,
                };
            }
            if let Some(w) = weights {
                let w = std::path::absolute(&w).unwrap_or(w);
                cfg.paths.prior_weights = Some(w);
            }
            let r = staged(&out, |d| app::optimize(&input, &cfg, d))?;
            info!("objective {:.6e} -> {:.6e}", r.report.optimizer.initial.total(), r.report.optimizer.objective);
            Ok(())
        }
        Command::Eval { result, gt, out } => {
            let out = out.unwrap_or_else(|| result.clone());
            let m = staged(&out, |d| app::eval(&result, &gt, d))?;
            println!("Pos. {:.2} mm  Ang. {:.3} deg  Reproj. {:.2} px", m.pos_mm, m.ang_deg, m.reproj_px);
            Ok(())
        }
        Command::Render { result, gt, out } => staged(&out, |d| app::render(&result, gt.as_deref(), d)).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
