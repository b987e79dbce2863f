//! Python bindings. Configs and results cross the boundary as plain dicts
//! with the same field names as the JSON config files.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gssbo::bo::{self, RunConfig};
use gssbo::harness::{self, GridConfig, NystromConfig};
use gssbo::select;
use gssbo::{Error, KernelFamily, KernelHyperparams};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::NotPositiveDefinite { .. } | Error::BaselineMissing => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_dict<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(json_err)
}

fn to_dict<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(json_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_kernel(name: &str) -> PyResult<KernelFamily> {
    name.parse().map_err(to_py_err)
}

/// A benchmark objective by name, e.g. `"hartmann6"` or `"levy_4"`.
#[pyclass(name = "Objective", module = "gssbo_py")]
struct PyObjective {
    inner: gssbo::Objective,
}

#[pymethods]
impl PyObjective {
    #[new]
    #[pyo3(signature = (name, dim=None))]
    fn new(name: &str, dim: Option<usize>) -> PyResult<Self> {
        Ok(PyObjective {
            inner: gssbo::Objective::parse(name, dim).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.inner.bounds.clone()
    }

    #[getter]
    fn optimum(&self) -> f64 {
        self.inner.optimum
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&x).map_err(to_py_err)
    }

    fn regret(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.instantaneous_regret(&x).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Objective('{}', dim={})", self.inner.name(), self.inner.dim)
    }
}

/// Exact GP with fixed isotropic hyperparameters.
#[pyclass(name = "GpModel", module = "gssbo_py")]
struct PyGpModel {
    inner: gssbo::GpModel,
}

#[pymethods]
impl PyGpModel {
    #[new]
    #[pyo3(signature = (points, y, lengthscale, signal_variance=1.0, noise=0.01, kernel="matern52", mean=0.0))]
    fn new(
        points: Vec<Vec<f64>>,
        y: Vec<f64>,
        lengthscale: f64,
        signal_variance: f64,
        noise: f64,
        kernel: &str,
        mean: f64,
    ) -> PyResult<Self> {
        let hp = KernelHyperparams::isotropic(lengthscale, signal_variance, noise).map_err(to_py_err)?;
        let inner =
            gssbo::GpModel::fit_points(points, y, &hp, parse_kernel(kernel)?, mean).map_err(to_py_err)?;
        Ok(PyGpModel { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Posterior mean and latent variance at `x`.
    fn posterior(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.posterior(&x).map_err(to_py_err)
    }

    fn posterior_batch(&self, xs: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.posterior_batch(&xs).map_err(to_py_err)
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    /// `-K_y⁻¹ (y - μ)`, the likelihood gradient with respect to the targets.
    fn scalar_gradients(&self) -> Vec<f64> {
        select::compute_scalar_gradients(&self.inner).as_slice().to_vec()
    }

    /// Greedy gradient-diverse subset of size `m` that always contains
    /// `forced` (default: the last point).
    #[pyo3(signature = (m, forced=None))]
    fn select_subset(&self, py: Python<'_>, m: usize, forced: Option<usize>) -> PyResult<Py<PyAny>> {
        let forced = forced.unwrap_or(self.inner.n().saturating_sub(1));
        let emb = select::GradientEmbedding::from_model(&self.inner);
        let sel = select::select_subset(&emb, m, forced).map_err(to_py_err)?;
        to_dict(py, &sel)
    }
}

/// Run one BO experiment. `config` uses the run-config JSON field names;
/// the result holds the per-iteration trace rows.
#[pyfunction]
fn run(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let cfg: RunConfig = from_dict(config)?;
    let record = bo::run(&cfg).map_err(to_py_err)?;
    to_dict(py, &record)
}

/// Run an objective × strategy × seed grid, writing traces and
/// `summary.json` into `out_dir`. Returns the summary.
#[pyfunction]
#[pyo3(signature = (config, out_dir, jobs=1))]
fn run_grid(py: Python<'_>, config: &Bound<'_, PyAny>, out_dir: &str, jobs: usize) -> PyResult<Py<PyAny>> {
    let cfg: GridConfig = from_dict(config)?;
    cfg.validate().map_err(to_py_err)?;
    let summary = harness::run_grid(&cfg, std::path::Path::new(out_dir), jobs).map_err(to_py_err)?;
    to_dict(py, &summary)
}

/// Nyström analysis of a synthetic Gram matrix.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn nystrom_analysis(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
    let cfg: NystromConfig = match config {
        Some(c) => from_dict(c)?,
        None => NystromConfig::default(),
    };
    let report = harness::nystrom_analysis(&cfg).map_err(to_py_err)?;
    to_dict(py, &report)
}

/// `½ Σ log(1 + σ⁻² s_t²)` over the prior standard deviations of the queries.
#[pyfunction]
fn information_gain(stds: Vec<f64>, noise: f64) -> PyResult<f64> {
    bo::information_gain(&stds, noise).map_err(to_py_err)
}

#[pymodule]
fn gssbo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObjective>()?;
    m.add_class::<PyGpModel>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    m.add_function(wrap_pyfunction!(nystrom_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(information_gain, m)?)?;
    Ok(())
}
