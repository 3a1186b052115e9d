//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists; points and matrices as nested lists of floats.

use std::path::PathBuf;

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use uncalmocap::app::{self, AppError};
use uncalmocap::eval;
use uncalmocap::geometry::{self, Extrinsics, Intrinsics, PlueckerRay};
use uncalmocap::pipeline::PipelineConfig as CoreConfig;
use uncalmocap::prior::{self, PriorBackend};
use uncalmocap::synth::SceneConfig;

fn app_err(e: AppError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => match e {
            AppError::Output(_) => PyOSError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        },
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable value to Python objects through `json.loads`.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

fn matrix(data: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = data.first().map_or(0, Vec::len);
    if data.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(data.len(), cols, |r, c| data[r][c]))
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Pinhole camera with `x_c = R x + t` in millimeters.
#[pyclass(module = "uncalmocap", frozen)]
struct Camera {
    inner: geometry::Camera,
}

#[pymethods]
impl Camera {
    #[new]
    #[pyo3(signature = (id, fx, fy, cx, cy, rotation, translation, skew = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(id: usize, fx: f64, fy: f64, cx: f64, cy: f64, rotation: [f64; 3], translation: [f64; 3], skew: f64) -> PyResult<Self> {
        let k = Intrinsics::new(fx, fy, cx, cy, skew).map_err(value_err)?;
        let e = Extrinsics::new(Vector3::from(rotation), Vector3::from(translation));
        Ok(Self { inner: geometry::Camera::new(id, k, e) })
    }

    #[getter]
    fn id(&self) -> usize {
        self.inner.id
    }

    #[getter]
    fn center(&self) -> [f64; 3] {
        vec3(&self.inner.extrinsics.center())
    }

    #[getter]
    fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        rows(&self.inner.extrinsics.rotation_matrix())
    }

    /// Pixel of a world point; raises for points behind the camera.
    fn project(&self, point: [f64; 3]) -> PyResult<[f64; 2]> {
        let px = self.inner.project(&Vector3::from(point)).map_err(value_err)?;
        Ok([px.x, px.y])
    }

    /// Back-projected ray as `(direction, moment)`.
    fn pixel_to_ray(&self, pixel: [f64; 2]) -> ([f64; 3], [f64; 3]) {
        let ray = self.inner.pixel_to_ray(&Vector2::from(pixel));
        (vec3(&ray.n), vec3(&ray.l))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.extrinsics.center();
        format!("Camera(id={}, center=[{:.1}, {:.1}, {:.1}])", self.inner.id, c.x, c.y, c.z)
    }
}

/// Least-squares point from rays given as `(direction, moment)` pairs.
#[pyfunction]
#[pyo3(signature = (rays, weights = None))]
fn triangulate(rays: Vec<([f64; 3], [f64; 3])>, weights: Option<Vec<f64>>) -> PyResult<[f64; 3]> {
    let rays: Vec<PlueckerRay> = rays.iter().map(|(d, m)| PlueckerRay::from_coordinates(Vector3::from(*d), Vector3::from(*m))).collect();
    let p = geometry::triangulate(&rays, weights.as_deref()).map_err(value_err)?;
    Ok(vec3(&p))
}

/// Pipeline settings. Construct from TOML text or use the defaults.
#[pyclass(module = "uncalmocap")]
struct PipelineConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PipelineConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => CoreConfig::from_toml(t).map_err(value_err)?,
            None => CoreConfig::default(),
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }
}

fn ensure_dir(dir: &std::path::Path) -> PyResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| PyOSError::new_err(format!("{}: {e}", dir.display())))
}

fn config(cfg: Option<&PipelineConfig>) -> CoreConfig {
    cfg.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Writes a synthetic scene into `out`. `scene` is optional TOML scene settings.
#[pyfunction]
#[pyo3(signature = (out, scene = None))]
fn synth(py: Python<'_>, out: PathBuf, scene: Option<&str>) -> PyResult<()> {
    let cfg: SceneConfig = match scene {
        Some(t) => toml::from_str(t).map_err(value_err)?,
        None => SceneConfig::default(),
    };
    ensure_dir(&out)?;
    py.detach(|| app::synth(&cfg, &out)).map_err(app_err)
}

/// Extrinsic initialization from the first frame of `input`.
#[pyfunction]
#[pyo3(signature = (input, out, config = None))]
fn init_cameras(py: Python<'_>, input: PathBuf, out: PathBuf, config: Option<&PipelineConfig>) -> PyResult<()> {
    let cfg = self::config(config);
    ensure_dir(&out)?;
    py.detach(|| app::init_cameras(&input, &cfg, &out)).map_err(app_err)
}

/// Filters identity swaps out of the 2D tracks in `input`.
#[pyfunction]
#[pyo3(signature = (input, out, config = None))]
fn denoise(py: Python<'_>, input: PathBuf, out: PathBuf, config: Option<&PipelineConfig>) -> PyResult<()> {
    let cfg = self::config(config);
    ensure_dir(&out)?;
    py.detach(|| app::denoise(&input, &cfg, &out)).map_err(app_err)
}

/// Fits the linear motion prior and writes `prior.weights` into `out`.
#[pyfunction]
#[pyo3(signature = (out, data = None, config = None))]
fn train_prior(py: Python<'_>, out: PathBuf, data: Option<PathBuf>, config: Option<&PipelineConfig>) -> PyResult<()> {
    let cfg = self::config(config);
    ensure_dir(&out)?;
    py.detach(|| app::train_prior(data.as_deref(), &cfg, &out)).map_err(app_err)
}

/// Full reconstruction; writes `result.json` and returns it as a dict.
#[pyfunction]
#[pyo3(signature = (input, out, config = None))]
fn optimize(py: Python<'_>, input: PathBuf, out: PathBuf, config: Option<&PipelineConfig>) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    ensure_dir(&out)?;
    let result = py.detach(|| app::optimize(&input, &cfg, &out)).map_err(app_err)?;
    to_py(py, &result)
}

/// Scores a result directory against a synthetic scene; writes and returns the metrics.
#[pyfunction]
fn evaluate(py: Python<'_>, result: PathBuf, gt: PathBuf, out: PathBuf) -> PyResult<Py<PyAny>> {
    ensure_dir(&out)?;
    let metrics = py.detach(|| app::eval(&result, &gt, &out)).map_err(app_err)?;
    to_py(py, &metrics)
}

/// Writes the SVG plots and returns their paths.
#[pyfunction]
#[pyo3(signature = (result, out, gt = None))]
fn render(py: Python<'_>, result: PathBuf, out: PathBuf, gt: Option<PathBuf>) -> PyResult<Vec<PathBuf>> {
    ensure_dir(&out)?;
    py.detach(|| app::render(&result, gt.as_deref(), &out)).map_err(app_err)
}

/// `(R, t, s, degenerate)`.
type SimilarityParts = ([[f64; 3]; 3], [f64; 3], f64, bool);

/// Similarity `dst ~ s R src + t` as `(R, t, s, degenerate)`.
#[pyfunction]
#[pyo3(signature = (src, dst, allow_scale = true))]
fn fit_similarity(src: Vec<[f64; 3]>, dst: Vec<[f64; 3]>, allow_scale: bool) -> PyResult<SimilarityParts> {
    if src.len() != dst.len() {
        return Err(PyValueError::new_err(format!("{} source points, {} targets", src.len(), dst.len())));
    }
    let a: Vec<_> = src.into_iter().map(Vector3::from).collect();
    let b: Vec<_> = dst.into_iter().map(Vector3::from).collect();
    let (t, degenerate) = eval::fit_similarity(&a, &b, allow_scale);
    Ok((rows(&t.rotation), vec3(&t.translation), t.scale, degenerate))
}

/// Fraction of limbs whose endpoints both land within `alpha` limb lengths
/// of the truth. Inputs are `[frame][joint] -> xyz`.
#[pyfunction]
#[pyo3(signature = (est, gt, alpha = 0.5))]
fn pcp(est: Vec<Vec<[f64; 3]>>, gt: Vec<Vec<[f64; 3]>>, alpha: f64) -> f64 {
    let conv = |s: Vec<Vec<[f64; 3]>>| s.into_iter().map(|f| f.into_iter().map(Vector3::from).collect()).collect::<Vec<Vec<_>>>();
    eval::pcp(&conv(est), &conv(gt), &eval::PCP_LIMBS, alpha)
}

/// Motion prior loaded from a `prior.weights` archive.
#[pyclass(module = "uncalmocap", frozen)]
struct MotionPrior {
    inner: PriorBackend,
}

#[pymethods]
impl MotionPrior {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        prior::load_weights_file(&path).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn backend(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn latent_dim(&self) -> PyResult<usize> {
        self.inner.latent_dim().map_err(value_err)
    }

    /// Mean latent codes, one row per frame.
    fn encode(&self, motion: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let (mu, _) = self.inner.encode_rows(&matrix(&motion)?).map_err(value_err)?;
        Ok(nested(&mu))
    }

    /// Motion rows decoded from latent rows.
    fn decode(&self, latent: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.decode_rows(&matrix(&latent)?).map(|m| nested(&m)).map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(|e| PyOSError::new_err(e.to_string()))
    }
}

/// Second-difference penalty on a latent trajectory; zero when the codes
/// move linearly in time.
#[pyfunction]
fn latent_linear_penalty(latent: Vec<Vec<f64>>) -> PyResult<f64> {
    prior::latent_linear_penalty(&matrix(&latent)?).map(|(v, _)| v).map_err(value_err)
}

#[pymodule(name = "uncalmocap")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Camera>()?;
    m.add_class::<PipelineConfig>()?;
    m.add_class::<MotionPrior>()?;
    m.add_function(wrap_pyfunction!(triangulate, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(init_cameras, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(train_prior, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(fit_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(pcp, m)?)?;
    m.add_function(wrap_pyfunction!(latent_linear_penalty, m)?)?;
    Ok(())
}
