//! Python bindings: stability constants, the synthetic benchmark, and
//! single-dataset runs driven by the same JSON configs as the CLI.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snpl::harness::{self, BenchmarkConfig, DatasetSchema, RunConfig};
use snpl::stability;
use snpl::synthetic::{self, Feature, ThresholdPolicy};

fn err(e: snpl::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: for<'de> serde::Deserialize<'de>>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("config: {e}")))
}

/// An observational dataset with known propensities.
#[pyclass(name = "Dataset", module = "snpl_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: snpl::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Draws `n` rows from the synthetic three-covariate design.
    #[staticmethod]
    fn synthetic(n: usize, seed: u64) -> Self {
        Self {
            inner: synthetic::generate(n, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (path, propensity=None, propensity_floor=None))]
    fn from_csv(path: PathBuf, propensity: Option<Vec<f64>>, propensity_floor: Option<f64>) -> PyResult<Self> {
        let schema = DatasetSchema {
            propensity,
            propensity_floor,
            ..DatasetSchema::default()
        };
        let inner = harness::read_dataset_file(&path, &schema).map_err(err)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (path, with_propensities=false))]
    fn to_csv(&self, path: PathBuf, with_propensities: bool) -> PyResult<()> {
        harness::write_dataset_file(&self.inner, &path, with_propensities).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn num_outcomes(&self) -> usize {
        self.inner.num_outcomes()
    }

    #[getter]
    fn covariate_dim(&self) -> usize {
        self.inner.covariate_dim()
    }

    /// Rows as `(covariates, action, outcomes)` tuples.
    fn rows(&self) -> Vec<(Vec<f64>, usize, Vec<f64>)> {
        self.inner
            .observations()
            .iter()
            .map(|o| (o.covariates.clone(), o.action, o.outcomes.clone()))
            .collect()
    }
}

#[pyfunction]
fn alpha_prime(alpha: f64, delta: f64, n: usize, epsilon: f64) -> PyResult<f64> {
    stability::alpha_prime(alpha, delta, n, epsilon).map_err(err)
}

/// `(delta*, alpha'(delta*))`.
#[pyfunction]
fn delta_star(alpha: f64, n: usize, epsilon: f64) -> PyResult<(f64, f64)> {
    stability::delta_star(alpha, n, epsilon).map_err(err)
}

#[pyfunction]
fn level_ratio(alpha: f64, gamma: f64) -> PyResult<f64> {
    stability::level_ratio(alpha, gamma).map_err(err)
}

#[pyfunction]
fn t_fn(n: usize, xi: f64) -> PyResult<f64> {
    stability::t_fn(n, xi).map_err(err)
}

#[pyfunction]
fn b_finite(n: usize, xi: f64, alpha_prime: f64) -> PyResult<f64> {
    stability::b_finite(n, xi, alpha_prime).map_err(err)
}

#[pyfunction]
fn b_asymp(n: usize, xi: f64, alpha_prime: f64, eta: usize, num_guardrails: usize) -> PyResult<f64> {
    stability::b_asymp(n, xi, alpha_prime, eta, num_guardrails).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (alpha, alpha_prime, class_size, num_guardrails, p=0.5))]
fn eta_heuristic(alpha: f64, alpha_prime: f64, class_size: usize, num_guardrails: usize, p: f64) -> usize {
    stability::eta_heuristic(alpha, alpha_prime, class_size, num_guardrails, p)
}

/// Exact `(V1, V2)` of the synthetic policy `1[feature(x) < cutoff]`.
#[pyfunction]
fn true_values(feature: &str, cutoff: f64) -> PyResult<(f64, f64)> {
    let f: Feature = feature.parse().map_err(PyValueError::new_err)?;
    Ok(ThresholdPolicy::new(f, cutoff).true_values())
}

/// Policy ids of the synthetic class, in scan order.
#[pyfunction]
fn synthetic_class(grid_size: usize) -> Vec<String> {
    synthetic::build_class(grid_size).into_iter().map(|p| p.id).collect()
}

/// Runs the learner described by `config_json` (the `run` config schema)
/// and returns the trace as JSON.
#[pyfunction]
#[pyo3(signature = (dataset, config_json=None))]
fn run(py: Python<'_>, dataset: &PyDataset, config_json: Option<&str>) -> PyResult<String> {
    let config: RunConfig = match config_json {
        Some(t) => parse(t)?,
        None => RunConfig::default(),
    };
    let ds = dataset.inner.clone();
    py.detach(move || harness::run_on_dataset(&ds, &config))
        .map(|t| t.to_json())
        .map_err(err)
}

/// Runs a replicated benchmark and returns the report CSV.
#[pyfunction]
fn benchmark(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config: BenchmarkConfig = parse(config_json)?;
    py.detach(move || harness::run_benchmark(&config))
        .map(|r| r.to_csv())
        .map_err(err)
}

#[pymodule]
fn snpl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(alpha_prime, m)?)?;
    m.add_function(wrap_pyfunction!(delta_star, m)?)?;
    m.add_function(wrap_pyfunction!(level_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(t_fn, m)?)?;
    m.add_function(wrap_pyfunction!(b_finite, m)?)?;
    m.add_function(wrap_pyfunction!(b_asymp, m)?)?;
    m.add_function(wrap_pyfunction!(eta_heuristic, m)?)?;
    m.add_function(wrap_pyfunction!(true_values, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_class, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    Ok(())
}
