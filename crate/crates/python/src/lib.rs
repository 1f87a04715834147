//! Python bindings.
//!
//! Points are passed as sequences of `[x, y, z]`; structured results
//! (summaries, metrics, splits) come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use rotgp_core::data::{generate_synthetic as core_generate, SyntheticConfig};
use rotgp_core::eval::compute_metrics as core_metrics;
use rotgp_core::experiment::{fit as core_fit, FitConfig};
use rotgp_core::gp::{self, Dataset, PredictiveResult};
use rotgp_core::kernel::{KernelProfile, MaternNu};
use rotgp_core::mcmc::{ChainConfig, ModelTemplate, Priors, ProposalScales};
use rotgp_core::metric::{build_metric, eigen_summary, MetricKind, MetricParams};
use rotgp_core::so3::{self, AxisAngle};
use rotgp_core::{Mat3, Vec3};

fn to_py_err(e: rotgp_core::Error) -> PyErr {
    use rotgp_core::Error as E;
    match e {
        E::NotSpd(_) | E::JitterCapExceeded { .. } | E::EigenNoConvergence | E::InitialState(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn points(x: Vec<[f64; 3]>) -> Vec<Vec3> {
    x.into_iter().map(Vec3::from).collect()
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn profile(name: &str) -> PyResult<KernelProfile> {
    Ok(match name {
        "se" | "squared_exponential" => KernelProfile::SquaredExponential,
        "matern12" => KernelProfile::Matern { nu: MaternNu::Half },
        "matern32" => KernelProfile::Matern { nu: MaternNu::ThreeHalves },
        "matern52" => KernelProfile::Matern { nu: MaternNu::FiveHalves },
        _ => return Err(PyValueError::new_err(format!("unknown kernel profile `{name}`"))),
    })
}

fn kind(name: &str) -> PyResult<MetricKind> {
    name.parse().map_err(to_py_err)
}

/// Rotation matrix `exp(U(a))` as nested lists.
#[pyfunction]
fn exp_so3(a: [f64; 3]) -> [[f64; 3]; 3] {
    rows(so3::exp_so3(&AxisAngle(a)).matrix())
}

/// Principal axis–angle vector of a rotation matrix.
#[pyfunction]
fn log_so3(r: [[f64; 3]; 3]) -> PyResult<[f64; 3]> {
    let m = Mat3::from_fn(|i, j| r[i][j]);
    let rot = so3::Rotation::from_matrix(m, 1e-8).ok_or_else(|| PyValueError::new_err("not a rotation matrix"))?;
    Ok(so3::log_so3(&rot).0)
}

/// Angle in radians of the rotation `exp(U(a))`.
#[pyfunction]
fn geodesic_angle(a: [f64; 3]) -> f64 {
    so3::geodesic_angle(&so3::exp_so3(&AxisAngle(a)))
}

/// Metric parameters with a fixed parameterisation.
#[pyclass(module = "rotgp", frozen)]
struct Metric {
    params: MetricParams,
}

#[pymethods]
impl Metric {
    #[staticmethod]
    fn ard(lengths: [f64; 3]) -> Self {
        Metric { params: MetricParams::ard(lengths) }
    }

    #[staticmethod]
    fn rotational(lengths: [f64; 3], axis_angle: [f64; 3]) -> Self {
        Metric { params: MetricParams::rotational(lengths, axis_angle) }
    }

    #[staticmethod]
    fn spd(diag: [f64; 3], offdiag: [f64; 3]) -> Self {
        Metric { params: MetricParams::spd(diag, offdiag) }
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.params.kind().name()
    }

    fn matrix(&self) -> PyResult<[[f64; 3]; 3]> {
        Ok(rows(build_metric(&self.params).map_err(to_py_err)?.matrix()))
    }

    /// Principal ranges, directions, eigenvalues and frame angle.
    fn eigen_summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let m = build_metric(&self.params).map_err(to_py_err)?;
        to_dict(py, &eigen_summary(&m).map_err(to_py_err)?)
    }

    fn __repr__(&self) -> String {
        format!("Metric({:?})", self.params)
    }
}

/// Zero-mean, unit-amplitude GP with a metric kernel and Gaussian noise.
#[pyclass(module = "rotgp", frozen)]
struct GpModel {
    inner: gp::GpModel,
}

#[pymethods]
impl GpModel {
    #[new]
    #[pyo3(signature = (metric, noise_var, profile = "se"))]
    fn new(metric: &Metric, noise_var: f64, profile: &str) -> PyResult<Self> {
        let p = self::profile(profile)?;
        Ok(GpModel { inner: gp::GpModel::new(p, metric.params, noise_var) })
    }

    fn log_marginal_likelihood(&self, x: Vec<[f64; 3]>, y: Vec<f64>) -> PyResult<f64> {
        let data = Dataset::new(points(x), y).map_err(to_py_err)?;
        gp::log_marginal_likelihood(&self.inner, &data).map_err(to_py_err)
    }

    /// Returns `(mean, var)` at `x_test`.
    fn predict(&self, x: Vec<[f64; 3]>, y: Vec<f64>, x_test: Vec<[f64; 3]>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let data = Dataset::new(points(x), y).map_err(to_py_err)?;
        let p = gp::predict(&self.inner, &data, &points(x_test)).map_err(to_py_err)?;
        Ok((p.mean, p.var))
    }
}

/// Draws a synthetic split from the `d1` or `d2` generator.
#[pyfunction]
#[pyo3(signature = (preset, n_train, n_test, seed = 0))]
fn generate_synthetic<'py>(
    py: Python<'py>,
    preset: &str,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = match preset {
        "d1" => SyntheticConfig::d1(n_train, n_test, seed),
        "d2" => SyntheticConfig::d2(n_train, n_test, seed),
        _ => return Err(PyValueError::new_err(format!("unknown preset `{preset}`"))),
    };
    let split = core_generate(&cfg).map_err(to_py_err)?;
    let out = PyDict::new(py);
    let xs = |d: &Dataset| d.x.iter().map(|v| [v[0], v[1], v[2]]).collect::<Vec<_>>();
    out.set_item("train_x", xs(&split.train))?;
    out.set_item("train_y", split.train.y.clone())?;
    out.set_item("test_x", xs(&split.test))?;
    out.set_item("test_y", split.test.y.clone())?;
    Ok(out)
}

/// Runs a random-walk Metropolis–Hastings chain and returns the posterior
/// summary.
#[pyfunction]
#[pyo3(signature = (x, y, model, noise_var = 0.0025, n_iters = 20_000, burn_in = 10_000, thin = 5, seed = 0, profile = "se"))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    x: Vec<[f64; 3]>,
    y: Vec<f64>,
    model: &str,
    noise_var: f64,
    n_iters: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    profile: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let data = Dataset::new(points(x), y).map_err(to_py_err)?;
    let cfg = FitConfig {
        template: ModelTemplate {
            kind: kind(model)?,
            profile: self::profile(profile)?,
            noise_var,
            sample_noise: false,
        },
        priors: Priors::default(),
        scales: ProposalScales::default(),
        chain: ChainConfig { n_iters, burn_in, thin, seed, block_update: false },
    };
    let result = py.detach(|| core_fit(&data, &cfg)).map_err(to_py_err)?;
    to_dict(py, &result.summary)
}

/// MAE, RMSE, coverages and the sd of standardised residuals.
#[pyfunction]
fn compute_metrics<'py>(py: Python<'py>, mean: Vec<f64>, var: Vec<f64>, truth: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let m = core_metrics(&PredictiveResult { mean, var }, &truth).map_err(to_py_err)?;
    to_dict(py, &m)
}

#[pymodule]
fn rotgp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Metric>()?;
    m.add_class::<GpModel>()?;
    m.add_function(wrap_pyfunction!(exp_so3, m)?)?;
    m.add_function(wrap_pyfunction!(log_so3, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_angle, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    Ok(())
}
