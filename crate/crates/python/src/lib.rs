use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use stratum::bound;
use stratum::eval::{self, Method, RunPlan};
use stratum::hybrid::{self, HybridBase, HybridConfig};
use stratum::nn::{self, CombinerWeights, TrainConfig};
use stratum::rules::{self, RuleKind};
use stratum::synth::{self, SyntheticSpec};
use stratum::{io, Error, LabelVector, PredictionMatrix, SampleId, Series, Threshold};

create_exception!(stratum, ConstraintError, PyValueError);

type SweepRows = Vec<(f64, f64, f64)>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Constraint(_) => ConstraintError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for stratum::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn sample_ids(ids: Vec<String>) -> PyResult<Vec<SampleId>> {
    ids.into_iter().map(|s| SampleId::new(s).py()).collect()
}

/// Per-model probabilities joined on sample id.
#[pyclass(name = "Matrix", module = "stratum", frozen)]
struct PyMatrix(PredictionMatrix);

#[pymethods]
impl PyMatrix {
    /// `columns` maps model name to one probability per id.
    #[new]
    fn new(ids: Vec<String>, columns: Vec<(String, Vec<f64>)>) -> PyResult<Self> {
        let ids = sample_ids(ids)?;
        let named = columns
            .into_iter()
            .map(|(name, values)| {
                let pairs = ids.iter().cloned().zip(values).collect();
                Ok((name, Series::new(pairs).py()?))
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyMatrix(PredictionMatrix::from_series(named).py()?))
    }

    /// Loads one `id,prob` file per model.
    #[staticmethod]
    fn load(paths: Vec<PathBuf>, names: Vec<String>) -> PyResult<Self> {
        Ok(PyMatrix(io::load_matrix(&paths, &names).py()?))
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0
            .ids()
            .iter()
            .map(|id| id.as_str().to_string())
            .collect()
    }

    #[getter]
    fn model_names(&self) -> Vec<String> {
        self.0.model_names().to_vec()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.0.column(name).py()?.to_vec())
    }

    fn save_column(&self, name: &str, path: PathBuf) -> PyResult<()> {
        io::write_prediction_file(&path, &self.0.column_series(name).py()?).py()
    }

    fn __len__(&self) -> usize {
        self.0.n_samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "Matrix(n={}, models={:?})",
            self.0.n_samples(),
            self.0.model_names()
        )
    }
}

/// Ground-truth 0/1 labels keyed by sample id.
#[pyclass(name = "Labels", module = "stratum", frozen)]
struct PyLabels(LabelVector);

#[pymethods]
impl PyLabels {
    #[new]
    fn new(ids: Vec<String>, labels: Vec<u8>) -> PyResult<Self> {
        let pairs = sample_ids(ids)?.into_iter().zip(labels).collect();
        Ok(PyLabels(LabelVector::new(pairs).py()?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyLabels(io::read_label_file(&path).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_label_file(&path, &self.0).py()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0
            .ids()
            .iter()
            .map(|id| id.as_str().to_string())
            .collect()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.labels().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Non-negative combiner `σ(Σ w_i p_i − b)` with decision threshold `t`.
#[pyclass(name = "Combiner", module = "stratum", frozen)]
struct PyCombiner {
    weights: CombinerWeights,
    clipped_any: bool,
}

#[pymethods]
impl PyCombiner {
    #[new]
    #[pyo3(signature = (model_names, weights, b, t = 0.5))]
    fn new(model_names: Vec<String>, weights: Vec<f64>, b: f64, t: f64) -> PyResult<Self> {
        let t = Threshold::new(t).py()?;
        Ok(PyCombiner {
            weights: CombinerWeights::new(model_names, weights, b, t).py()?,
            clipped_any: false,
        })
    }

    /// Trains on every column of `matrix`.
    #[staticmethod]
    #[pyo3(signature = (matrix, labels, learning_rate = 0.001, epochs = 200, batch_size = 32, l2 = 0.039, seed = 0))]
    fn train(
        matrix: &PyMatrix,
        labels: &PyLabels,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        l2: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            l2,
            seed,
            ..TrainConfig::default()
        };
        let out = nn::train(&matrix.0, &labels.0, &cfg).py()?;
        Ok(PyCombiner {
            weights: out.weights,
            clipped_any: out.clipped_any,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let saved = io::load_weights(&path).py()?;
        Ok(PyCombiner {
            weights: saved.weights,
            clipped_any: saved.clipped_any,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let saved = io::SavedWeights {
            weights: self.weights.clone(),
            train_config: None,
            clipped_any: self.clipped_any,
        };
        io::save_weights(&path, &saved).py()
    }

    #[getter]
    fn model_names(&self) -> Vec<String> {
        self.weights.model_names().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.weights.weights().to_vec()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.weights.shift()
    }

    #[getter]
    fn t(&self) -> f64 {
        self.weights.threshold().value()
    }

    #[getter]
    fn clipped_any(&self) -> bool {
        self.clipped_any
    }

    #[getter]
    fn weight_sum(&self) -> f64 {
        bound::weight_sum(&self.weights)
    }

    fn forward(&self, p: Vec<f64>) -> PyResult<f64> {
        nn::forward(&self.weights, &p).py()
    }

    fn predict(&self, matrix: &PyMatrix) -> PyResult<Vec<f64>> {
        Ok(nn::predict(&self.weights, &matrix.0)
            .py()?
            .values()
            .to_vec())
    }

    fn loss(&self, matrix: &PyMatrix, labels: &PyLabels, l2: f64) -> PyResult<f64> {
        nn::loss(&self.weights, &matrix.0, &labels.0, l2).py()
    }

    fn gradient(&self, matrix: &PyMatrix, labels: &PyLabels, l2: f64) -> PyResult<Vec<f64>> {
        nn::gradient(&self.weights, &matrix.0, &labels.0, l2).py()
    }

    /// Weight-sum interval on `(matrix, labels)`.
    fn check_bound(
        &self,
        matrix: &PyMatrix,
        labels: &PyLabels,
    ) -> PyResult<HashMap<&'static str, f64>> {
        let r = bound::theorem_bounds(&self.weights, &matrix.0, &labels.0).py()?;
        Ok(HashMap::from([
            ("weight_sum", r.weight_sum),
            ("lower", r.lower),
            ("upper", r.upper),
            ("norm_u", r.norm_u),
            ("err_y", r.err_y),
            ("err_yhat", r.err_yhat),
            ("contained", f64::from(u8::from(r.contained))),
            ("degenerate", f64::from(u8::from(r.degenerate))),
        ]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Combiner(model_names={:?}, weights={:?}, b={}, t={})",
            self.weights.model_names(),
            self.weights.weights(),
            self.weights.shift(),
            self.weights.threshold().value()
        )
    }
}

fn rule(name: &str) -> PyResult<RuleKind> {
    name.parse().py()
}

/// `(label, score)` of a fixed rule on one probability vector.
#[pyfunction]
fn decide(rule_name: &str, p: Vec<f64>) -> PyResult<(u8, f64)> {
    let d = rule(rule_name)?.decide(&p).py()?;
    Ok((d.label, d.score))
}

/// Rule scores and labels over the named columns (all columns by default).
#[pyfunction]
#[pyo3(signature = (rule_name, matrix, models = None))]
fn apply_rule(
    rule_name: &str,
    matrix: &PyMatrix,
    models: Option<Vec<String>>,
) -> PyResult<(Vec<f64>, Vec<u8>)> {
    let models = models.unwrap_or_else(|| matrix.0.model_names().to_vec());
    let out = rules::apply_rule(rule(rule_name)?, &matrix.0, &models).py()?;
    Ok((out.scores.values().to_vec(), out.labels))
}

fn hybrid_base(base: String, aux: Vec<String>, rule_name: &str) -> PyResult<HybridBase> {
    HybridBase::new(base, aux, rule(rule_name)?).py()
}

/// Hybrid labels, scores and a per-sample flag that is true where the
/// auxiliary rule decided.
#[pyfunction]
#[pyo3(signature = (matrix, base, aux, theta, rule_name = "sum"))]
fn hybrid_predict(
    matrix: &PyMatrix,
    base: String,
    aux: Vec<String>,
    theta: f64,
    rule_name: &str,
) -> PyResult<(Vec<u8>, Vec<f64>, Vec<bool>)> {
    let cfg = HybridConfig {
        spec: hybrid_base(base, aux, rule_name)?,
        theta,
    };
    let out = hybrid::hybrid_predict(&cfg, &matrix.0).py()?;
    let fallback = out
        .sources
        .iter()
        .map(|s| *s == hybrid::Source::Aux)
        .collect();
    Ok((out.labels, out.scores, fallback))
}

/// `(best_theta, best_accuracy, [(theta, accuracy, fallback_fraction), ...])`.
#[pyfunction]
#[pyo3(signature = (matrix, labels, base, aux, rule_name = "sum", grid = None))]
fn theta_sweep(
    matrix: &PyMatrix,
    labels: &PyLabels,
    base: String,
    aux: Vec<String>,
    rule_name: &str,
    grid: Option<Vec<f64>>,
) -> PyResult<(f64, f64, SweepRows)> {
    let spec = hybrid_base(base, aux, rule_name)?;
    let grid = grid.unwrap_or_else(hybrid::default_grid);
    let res = hybrid::theta_sweep(&spec, &matrix.0, &labels.0, &grid).py()?;
    let rows = res
        .rows
        .iter()
        .map(|r| (r.theta, r.accuracy, r.fallback_fraction))
        .collect();
    Ok((res.best_theta, res.best_accuracy, rows))
}

/// Synthetic suite of calibrated classifiers: `(labels, matrix)`.
#[pyfunction]
#[pyo3(signature = (target_acc, rho, n, seed = 0, balance = 0.5, sharpness = 2.0))]
fn generate(
    target_acc: Vec<f64>,
    rho: f64,
    n: usize,
    seed: u64,
    balance: f64,
    sharpness: f64,
) -> PyResult<(PyLabels, PyMatrix)> {
    let spec = SyntheticSpec {
        balance,
        sharpness,
        ..SyntheticSpec::new(target_acc, rho, n, seed).py()?
    };
    let (labels, m) = synth::generate(&spec).py()?;
    Ok((PyLabels(labels), PyMatrix(m)))
}

#[pyfunction]
fn inv_norm_cdf(q: f64) -> PyResult<f64> {
    synth::inv_norm_cdf(q).py()
}

/// Repeated k-fold evaluation of the nn combiner or a fixed rule; returns
/// `(mean, stdev, per-run accuracies)`.
#[pyfunction]
#[pyo3(signature = (method, train, train_labels, test, test_labels, folds = 5, repeats = 30, seed = 0, epochs = 200))]
#[allow(clippy::too_many_arguments)]
fn cross_validate(
    method: &str,
    train: &PyMatrix,
    train_labels: &PyLabels,
    test: &PyMatrix,
    test_labels: &PyLabels,
    folds: usize,
    repeats: usize,
    seed: u64,
    epochs: usize,
) -> PyResult<(f64, f64, Vec<f64>)> {
    let method = match method {
        "nn" => Method::Nn(TrainConfig {
            epochs,
            ..TrainConfig::default()
        }),
        other => Method::Rule(rule(other)?),
    };
    let plan = RunPlan {
        n_folds: folds,
        repeats_per_fold: repeats,
        seed,
    };
    let report = eval::cross_validate(
        &plan,
        &train.0,
        &train_labels.0,
        &test.0,
        &test_labels.0,
        &method,
    )
    .py()?;
    let accs = report.records.iter().map(|r| r.accuracy).collect();
    Ok((report.mean, report.stdev, accs))
}

#[pymodule]
#[pyo3(name = "stratum")]
pub fn stratum_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConstraintError", m.py().get_type::<ConstraintError>())?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyLabels>()?;
    m.add_class::<PyCombiner>()?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(apply_rule, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_predict, m)?)?;
    m.add_function(wrap_pyfunction!(theta_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(inv_norm_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    Ok(())
}
