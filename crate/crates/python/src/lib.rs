//! Python bindings: the main types and operations of the gated-imaging
//! toolkit. Images cross the boundary as flat row-major lists plus explicit
//! dimensions.

use gatedsim_core::formation::{
    apply_noise, make_test_scene, render_noiseless, GatedFrame, NoiseModel, SceneKind,
    SceneModel, SceneParams,
};
use gatedsim_core::geometry::Intrinsics;
use gatedsim_core::image::Image;
use gatedsim_core::inversion::{DepthMap, Solver, SolverParams};
use gatedsim_core::losses::{cyclic_loss, MaskMode, SceneEstimate, SsimParams};
use gatedsim_core::masks::{MaskStack, MaskThresholds};
use gatedsim_core::metrics::{compute_metrics, DeltaConvention, GroundTruthPoint};
use gatedsim_core::profile::{default_profiles, EvalMode, ProfileSet};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<EvalMode> {
    match mode {
        "chebyshev" => Ok(EvalMode::Chebyshev),
        "analytic" => Ok(EvalMode::Analytic),
        other => Err(PyValueError::new_err(format!("unknown eval mode '{other}'"))),
    }
}

/// The three calibrated range-intensity profiles.
#[pyclass(name = "Profiles")]
struct PyProfiles {
    inner: ProfileSet,
}

#[pymethods]
impl PyProfiles {
    /// Built-in defaults: gates 3–72 m, 18–123 m, 57–176 m.
    #[staticmethod]
    fn default() -> Self {
        PyProfiles {
            inner: default_profiles(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyProfiles {
            inner: gatedsim_core::io::load_profiles(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        gatedsim_core::io::save_profiles(&path, &self.inner).map_err(err)
    }

    /// C_i(r) for slice `i` at range `r` metres.
    #[pyo3(signature = (slice, r, mode = "chebyshev"))]
    fn eval(&self, slice: usize, r: f64, mode: &str) -> PyResult<f64> {
        if slice > 2 {
            return Err(PyValueError::new_err("slice must be 0, 1, or 2"));
        }
        Ok(self.inner.slice(slice).eval(r, parse_mode(mode)?))
    }

    /// dC_i/dr of the Chebyshev representation, 1/m.
    fn derivative(&self, slice: usize, r: f64) -> PyResult<f64> {
        if slice > 2 {
            return Err(PyValueError::new_err("slice must be 0, 1, or 2"));
        }
        Ok(self.inner.slice(slice).derivative(r))
    }

    fn visible_range(&self, slice: usize) -> PyResult<(f64, f64)> {
        if slice > 2 {
            return Err(PyValueError::new_err("slice must be 0, 1, or 2"));
        }
        Ok(self.inner.slice(slice).timing.visible_range())
    }

    /// Range where C_first(s) = c_ratio · C_2(s), if the profiles cross.
    #[pyo3(signature = (first, c_ratio = 0.995, mode = "chebyshev"))]
    fn crossover_with_last(&self, first: usize, c_ratio: f64, mode: &str) -> PyResult<Option<f64>> {
        if first > 1 {
            return Err(PyValueError::new_err("first must be 0 or 1"));
        }
        Ok(self.inner.crossover_with_last(first, c_ratio, parse_mode(mode)?))
    }
}

/// Per-pixel ground-truth scene (albedo, depth, ambient).
#[pyclass(name = "Scene")]
struct PyScene {
    inner: SceneModel,
}

#[pymethods]
impl PyScene {
    /// One of the canned test scenes: flat_wall, depth_ramp, boxes,
    /// ground_plane, retroreflector.
    #[staticmethod]
    #[pyo3(signature = (kind, width, height, albedo = None, ambient = None, distance_m = None,
                        near_m = None, far_m = None, camera_height_m = None))]
    #[allow(clippy::too_many_arguments)]
    fn test_scene(
        kind: &str,
        width: usize,
        height: usize,
        albedo: Option<f64>,
        ambient: Option<f64>,
        distance_m: Option<f64>,
        near_m: Option<f64>,
        far_m: Option<f64>,
        camera_height_m: Option<f64>,
    ) -> PyResult<Self> {
        let defaults = SceneParams::default();
        let params = SceneParams {
            albedo: albedo.unwrap_or(defaults.albedo),
            ambient: ambient.unwrap_or(defaults.ambient),
            distance_m: distance_m.unwrap_or(defaults.distance_m),
            near_m: near_m.unwrap_or(defaults.near_m),
            far_m: far_m.unwrap_or(defaults.far_m),
            camera_height_m: camera_height_m.unwrap_or(defaults.camera_height_m),
            ..defaults
        };
        let kind = SceneKind::parse(kind).map_err(err)?;
        Ok(PyScene {
            inner: make_test_scene(kind, width, height, &params).map_err(err)?,
        })
    }

    /// A scene from flat row-major lists.
    #[staticmethod]
    #[pyo3(signature = (width, height, albedo, depth, ambient))]
    fn from_images(
        width: usize,
        height: usize,
        albedo: Vec<f64>,
        depth: Vec<f64>,
        ambient: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = SceneModel::new(
            Image::from_vec(width, height, albedo).map_err(err)?,
            Image::from_vec(width, height, depth).map_err(err)?,
            Image::from_vec(width, height, ambient).map_err(err)?,
            None,
        )
        .map_err(err)?;
        Ok(PyScene { inner })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn depth(&self) -> Vec<f64> {
        self.inner.depth().data().to_vec()
    }

    fn albedo(&self) -> Vec<f64> {
        self.inner.albedo().data().to_vec()
    }

    fn ambient(&self) -> Vec<f64> {
        self.inner.ambient().data().to_vec()
    }
}

/// Three gated slices plus the passive exposure.
#[pyclass(name = "Frame")]
struct PyFrame {
    inner: GatedFrame,
}

#[pymethods]
impl PyFrame {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn slice(&self, i: usize) -> PyResult<Vec<f64>> {
        if i > 2 {
            return Err(PyValueError::new_err("slice must be 0, 1, or 2"));
        }
        Ok(self.inner.slices[i].data().to_vec())
    }

    fn passive(&self) -> Vec<f64> {
        self.inner.passive.data().to_vec()
    }

    /// Sensor noise: Poisson(poisson_scale·Z)/poisson_scale + N(0, sigma),
    /// clamped; deterministic in the seed.
    #[pyo3(signature = (gaussian_sigma = 0.002, poisson_scale = 5000.0, seed = 0))]
    fn with_noise(&self, gaussian_sigma: f64, poisson_scale: f64, seed: u64) -> PyResult<Self> {
        let model = NoiseModel::new(gaussian_sigma, poisson_scale, seed).map_err(err)?;
        Ok(PyFrame {
            inner: apply_noise(&self.inner, &model),
        })
    }
}

/// Recovered depth with validity and solver diagnostics.
#[pyclass(name = "DepthResult")]
struct PyDepthResult {
    inner: DepthMap,
}

#[pymethods]
impl PyDepthResult {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn depth(&self) -> Vec<f64> {
        self.inner.depth.data().to_vec()
    }

    fn validity(&self) -> Vec<bool> {
        self.inner.validity.data().to_vec()
    }

    #[getter]
    fn convergence_rate(&self) -> f64 {
        self.inner.convergence_rate()
    }

    fn albedo(&self) -> Option<Vec<f64>> {
        self.inner
            .estimates
            .as_ref()
            .map(|es| es.iter().map(|e| e.albedo).collect())
    }

    fn ambient(&self) -> Option<Vec<f64>> {
        self.inner
            .estimates
            .as_ref()
            .map(|es| es.iter().map(|e| e.ambient).collect())
    }
}

/// Renders a noiseless gated frame from a scene.
#[pyfunction]
#[pyo3(signature = (scene, profiles, mode = "chebyshev"))]
fn render(scene: &PyScene, profiles: &PyProfiles, mode: &str) -> PyResult<PyFrame> {
    Ok(PyFrame {
        inner: render_noiseless(&scene.inner, &profiles.inner, parse_mode(mode)?).map_err(err)?,
    })
}

/// Recovers per-pixel (depth, albedo, ambient) from a frame.
#[pyfunction]
#[pyo3(signature = (frame, profiles, mode = "chebyshev"))]
fn solve_frame(frame: &PyFrame, profiles: &PyProfiles, mode: &str) -> PyResult<PyDepthResult> {
    let solver = Solver::new(&profiles.inner, parse_mode(mode)?, SolverParams::default());
    Ok(PyDepthResult {
        inner: solver.solve_frame(&frame.inner, None).map_err(err)?,
    })
}

/// Ratio-based coarse depth r̃; +inf marks pixels without modulated signal.
#[pyfunction]
#[pyo3(signature = (frame, profiles, mode = "chebyshev"))]
fn approx_depth_ratio(frame: &PyFrame, profiles: &PyProfiles, mode: &str) -> PyResult<Vec<f64>> {
    let solver = Solver::new(&profiles.inner, parse_mode(mode)?, SolverParams::default());
    Ok(solver.approx_depth_ratio(&frame.inner).into_vec())
}

/// The full mask stack as flat boolean lists plus diagnostics.
#[pyfunction]
#[pyo3(signature = (frame, depth_result, profiles, mode = "chebyshev"))]
fn mask_stack<'py>(
    py: Python<'py>,
    frame: &PyFrame,
    depth_result: &PyDepthResult,
    profiles: &PyProfiles,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let intr = Intrinsics::default_for(frame.inner.width(), frame.inner.height());
    let stack = MaskStack::compute(
        &frame.inner,
        &depth_result.inner,
        &intr,
        &profiles.inner,
        parse_mode(mode)?,
        &MaskThresholds::default(),
    )
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("D", stack.modulated.data().to_vec())?;
    out.set_item("M", stack.unsaturated.data().to_vec())?;
    out.set_item("b_prime", stack.combined.data().to_vec())?;
    out.set_item("E", stack.multipath.data().to_vec())?;
    out.set_item("b", stack.valid.data().to_vec())?;
    out.set_item("S1", stack.near_short.data().to_vec())?;
    out.set_item("S2", stack.near_mid.data().to_vec())?;
    out.set_item("m", stack.near.data().to_vec())?;
    out.set_item("v", stack.temporal_valid.data().to_vec())?;
    out.set_item("crossover_s0_m", stack.crossover_s0_m)?;
    out.set_item("crossover_s1_m", stack.crossover_s1_m)?;
    out.set_item("median_near_depth_m", stack.median_near_depth_m)?;
    Ok(out)
}

/// Cyclic gated-consistency loss of an estimate against a frame.
#[pyfunction]
#[pyo3(signature = (frame, depth, albedo, ambient, profiles, mode = "chebyshev"))]
fn cyclic_consistency_loss<'py>(
    py: Python<'py>,
    frame: &PyFrame,
    depth: Vec<f64>,
    albedo: Vec<f64>,
    ambient: Vec<f64>,
    profiles: &PyProfiles,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let (w, h) = (frame.inner.width(), frame.inner.height());
    let estimate = SceneEstimate::new(
        Image::from_vec(w, h, depth).map_err(err)?,
        Image::from_vec(w, h, albedo).map_err(err)?,
        Image::from_vec(w, h, ambient).map_err(err)?,
    )
    .map_err(err)?;
    let report = cyclic_loss(
        &frame.inner,
        &estimate,
        &profiles.inner,
        parse_mode(mode)?,
        &Image::new(w, h, true),
        &SsimParams::default(),
        MaskMode::Restricted,
        false,
    )
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("total", report.total)?;
    out.set_item("per_slice", report.per_slice.to_vec())?;
    out.set_item("ambient_term", report.ambient_term)?;
    out.set_item("valid_pixel_count", report.valid_pixel_count)?;
    Ok(out)
}

/// RMSE/MAE/ARD/δ metrics of a prediction against dense ground truth
/// (non-positive ground-truth entries carry no measurement).
#[pyfunction]
#[pyo3(signature = (pred, gt_depth, range_m = (3.0, 80.0)))]
fn depth_metrics<'py>(
    py: Python<'py>,
    pred: &PyDepthResult,
    gt_depth: Vec<f64>,
    range_m: (f64, f64),
) -> PyResult<Bound<'py, PyDict>> {
    let (w, h) = (pred.inner.width(), pred.inner.height());
    if gt_depth.len() != w * h {
        return Err(PyValueError::new_err("ground truth size mismatch"));
    }
    let points: Vec<GroundTruthPoint> = gt_depth
        .iter()
        .enumerate()
        .filter(|(_, &d)| d.is_finite() && d > 0.0)
        .map(|(idx, &d)| GroundTruthPoint {
            x: idx % w,
            y: idx / w,
            depth_m: d,
        })
        .collect();
    let report = compute_metrics(&pred.inner, &points, range_m, DeltaConvention::default())
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("rmse_m", report.rmse_m)?;
    out.set_item("mae_m", report.mae_m)?;
    out.set_item("ard", report.ard)?;
    out.set_item("delta1", report.delta1)?;
    out.set_item("delta2", report.delta2)?;
    out.set_item("delta3", report.delta3)?;
    out.set_item("completeness", report.completeness)?;
    out.set_item("n_points", report.n_points)?;
    Ok(out)
}

#[pymodule]
fn gatedsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProfiles>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyDepthResult>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(solve_frame, m)?)?;
    m.add_function(wrap_pyfunction!(approx_depth_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(mask_stack, m)?)?;
    m.add_function(wrap_pyfunction!(cyclic_consistency_loss, m)?)?;
    m.add_function(wrap_pyfunction!(depth_metrics, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
