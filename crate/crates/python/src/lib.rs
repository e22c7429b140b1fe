//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use trak_core::config::{parse_activation, EstimatorFamily, ExperimentConfig};
use trak_core::datagen::{synthetic_sample, CovarianceRule, DesignConfig};
use trak_core::harness::{accuracy, run_batch, run_experiment, select_removed, BatchSpec};
use trak_core::influence::{InfluenceTable, InfluenceValue};
use trak_core::{fit_erm, Dataset, FitResult, ModelSpec, SolverOptions};

create_exception!(trak_py, TrakError, PyException);

fn err(e: trak_core::Error) -> PyErr {
    TrakError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(TrakError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "Model", frozen, from_py_object)]
#[derive(Clone)]
struct PyModel {
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn linear(p: usize) -> Self {
        PyModel { spec: ModelSpec::linear_squared(p) }
    }

    #[staticmethod]
    fn logistic(p: usize) -> Self {
        PyModel { spec: ModelSpec::logistic(p) }
    }

    #[staticmethod]
    fn poisson(p: usize) -> Self {
        PyModel { spec: ModelSpec::poisson(p) }
    }

    #[staticmethod]
    fn multiclass(classes: usize, p: usize) -> PyResult<Self> {
        Ok(PyModel { spec: ModelSpec::multiclass(classes, p).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (hidden, p, activation = "tanh"))]
    fn hidden_layer(hidden: usize, p: usize, activation: &str) -> PyResult<Self> {
        let act = parse_activation(activation).map_err(err)?;
        Ok(PyModel { spec: ModelSpec::one_hidden_layer(hidden, p, act).map_err(err)? })
    }

    #[getter]
    fn p(&self) -> usize {
        self.spec.p
    }

    #[getter]
    fn d(&self) -> usize {
        self.spec.d
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name()
    }

    fn __repr__(&self) -> String {
        format!("Model({}, p={}, d={})", self.spec.name(), self.spec.p, self.spec.d)
    }
}

#[pyclass(name = "Dataset", frozen, from_py_object)]
#[derive(Clone)]
struct PyDataset {
    data: Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(model: &PyModel, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let data = Dataset::new(&model.spec, matrix(x)?, DVector::from_vec(y)).map_err(err)?;
        Ok(PyDataset { data })
    }

    #[getter]
    fn n(&self) -> usize {
        self.data.n()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        to_rows(self.data.features())
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.data.responses().iter().copied().collect()
    }

    fn __len__(&self) -> usize {
        self.data.n()
    }
}

#[pyclass(name = "Fit", frozen)]
struct PyFit {
    fit: FitResult,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.fit.beta.iter().copied().collect()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.fit.objective
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.fit.iterations
    }

    #[getter]
    fn grad_norm(&self) -> f64 {
        self.fit.grad_norm
    }

    #[getter]
    fn converged(&self) -> bool {
        self.fit.converged
    }
}

/// Draws a synthetic train/test pair from the Toeplitz design.
#[pyfunction]
#[pyo3(signature = (model, n, test_count = 10, seed = 0, decay = 0.1, covariance = None))]
fn simulate(
    model: &PyModel,
    n: usize,
    test_count: usize,
    seed: u64,
    decay: f64,
    covariance: Option<&str>,
) -> PyResult<(PyDataset, PyDataset)> {
    let spec = &model.spec;
    let mut cfg = match spec.classes() {
        Some(k) => DesignConfig::multiclass(n, spec.p, k, seed),
        None => DesignConfig::glm(n, spec.p, seed),
    };
    cfg.decay = decay;
    match covariance {
        None => {}
        Some("unit_signal") => cfg.covariance_rule = CovarianceRule::UnitSignal,
        Some("inverse_beta_norm") | Some("spectral") => cfg.covariance_rule = CovarianceRule::InverseBetaNorm,
        Some(other) => return Err(TrakError::new_err(format!("unknown covariance rule {other:?}"))),
    }
    let sample = synthetic_sample(spec, &cfg, test_count).map_err(err)?;
    Ok((PyDataset { data: sample.train }, PyDataset { data: sample.test }))
}

#[pyfunction]
#[pyo3(signature = (model, data, ridge = 0.0))]
fn fit(py: Python<'_>, model: &PyModel, data: &PyDataset, ridge: f64) -> PyResult<PyFit> {
    let opts = SolverOptions { ridge, ..Default::default() };
    let init = DVector::zeros(model.spec.d);
    let fit = py.detach(|| fit_erm(&model.spec, &data.data, &init, &opts)).map_err(err)?;
    Ok(PyFit { fit })
}

#[pyfunction(name = "accuracy")]
fn py_accuracy(model: &PyModel, data: &PyDataset, beta: Vec<f64>) -> PyResult<f64> {
    accuracy(&model.spec, &data.data, &DVector::from_vec(beta)).map_err(err)
}

/// `(train_index, test_id, value)`; `None` marks a breakdown cell.
type Cell = (usize, u64, Option<f64>);

fn rows_of(table: &InfluenceTable) -> Vec<Cell> {
    table
        .entries
        .iter()
        .map(|(&(test, train), v)| {
            let value = match v {
                InfluenceValue::Value(x) => Some(*x),
                InfluenceValue::Breakdown => None,
            };
            (train, test, value)
        })
        .collect()
}

/// Influence of removing each row in `removed` on every test row. Returns
/// `{label: [(train_index, test_id, value)]}`; breakdown cells carry `None`.
/// Self-influence tables, when requested, are keyed `dependent_<label>`.
#[pyfunction]
#[pyo3(signature = (model, train, test, removed, estimators = vec!["true".to_string(), "linear".to_string(), "alo".to_string()], k = vec![], dependent = false, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn influence(
    py: Python<'_>,
    model: &PyModel,
    train: &PyDataset,
    test: &PyDataset,
    removed: Vec<usize>,
    estimators: Vec<String>,
    k: Vec<usize>,
    dependent: bool,
    seed: u64,
) -> PyResult<BTreeMap<String, Vec<Cell>>> {
    let families = estimators.iter().map(|s| s.parse::<EstimatorFamily>()).collect::<Result<_, _>>().map_err(err)?;
    let cfg = ExperimentConfig { estimators: families, ks: k, ..Default::default() };
    let bs = BatchSpec {
        removed,
        estimators: cfg.estimator_kinds(),
        dependent,
        seed,
        trial: 0,
        solver: SolverOptions::default(),
    };
    let batch = py.detach(|| run_batch(&model.spec, &train.data, &test.data, &bs)).map_err(err)?;
    if let Some(first) = batch.failures.first() {
        return Err(TrakError::new_err(first.clone()));
    }
    let mut out: BTreeMap<_, _> = batch.tables.iter().map(|t| (t.estimator.to_string(), rows_of(t))).collect();
    out.extend(batch.dependent.iter().map(|t| (format!("dependent_{}", t.estimator), rows_of(t))));
    Ok(out)
}

/// Sorted sample of `count` distinct training indices.
#[pyfunction(name = "select_removed")]
#[pyo3(signature = (n, count, seed = 0))]
fn py_select_removed(n: usize, count: usize, seed: u64) -> PyResult<Vec<usize>> {
    select_removed(n, count, seed, 0).map_err(err)
}

/// Runs the synthetic protocol described by a `key = value` config and
/// returns the summary text. Tables are written under `out`.
#[pyfunction(name = "run_experiment")]
fn py_run_experiment(py: Python<'_>, config: &str, out: PathBuf) -> PyResult<String> {
    let mut cfg = ExperimentConfig::parse(config).map_err(err)?;
    cfg.out = out;
    let report = py.detach(|| run_experiment(&cfg)).map_err(err)?;
    Ok(report.summary)
}

#[pyfunction]
fn pearson(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    trak_core::metrics::pearson(&xs, &ys).map_err(err)
}

#[pymodule]
fn trak_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrakError", m.py().get_type::<TrakError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(py_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(influence, m)?)?;
    m.add_function(wrap_pyfunction!(py_select_removed, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    Ok(())
}
