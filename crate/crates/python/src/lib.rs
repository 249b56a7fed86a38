//! Python bindings: datasets, the logistic model, influence, the
//! recommendation policies and the cross-validated evaluation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use second_opinion_core::config::RunConfig;
use second_opinion_core::data::{self, CaseId, PanelDataset, SyntheticSpec, WideSchema};
use second_opinion_core::eval::{self, EvaluationSummary};
use second_opinion_core::glm::{self, FitOptions, FitReport, TrainingSet};
use second_opinion_core::influence::{self, PerturbationSpec};
use second_opinion_core::recommend;
use second_opinion_core::{Error, ErrorKind, InfluenceReport};

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for second_opinion_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(|e| match (&e, e.kind()) {
            (Error::Io(_), _) => PyOSError::new_err(e.to_string()),
            (_, ErrorKind::Numerical) => PyArithmeticError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        })
    }
}

fn training_set(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<TrainingSet> {
    TrainingSet::from_rows(&rows, &labels).py_err()
}

fn fit_options(lam: f64, tol: f64, max_iter: usize, tau: f64) -> FitOptions {
    FitOptions {
        lambda: lam,
        tol,
        max_iter,
        tau,
        best_effort: false,
    }
}

/// A panel of cases, each assessed by some of the experts.
#[pyclass(name = "Dataset", module = "second_opinion", frozen)]
struct PyDataset {
    inner: PanelDataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a wide CSV: one row per case, one label column per expert.
    #[staticmethod]
    #[pyo3(signature = (path, expert_columns, feature_columns=None, case_id_column=None, exclude_columns=None))]
    fn from_csv(
        path: PathBuf,
        expert_columns: Vec<String>,
        feature_columns: Option<Vec<String>>,
        case_id_column: Option<String>,
        exclude_columns: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let schema = WideSchema {
            feature_columns,
            expert_columns,
            case_id_column,
            exclude_columns: exclude_columns.unwrap_or_default(),
        };
        Ok(PyDataset {
            inner: data::load_wide_csv(path, &schema).py_err()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (k, n_cases, n_features, base_coeffs, expert_offsets=None, label_noise=0.0, seed=0))]
    fn synthetic(
        k: usize,
        n_cases: usize,
        n_features: usize,
        base_coeffs: Vec<f64>,
        expert_offsets: Option<Vec<Vec<f64>>>,
        label_noise: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = SyntheticSpec {
            k,
            n_cases,
            n_features,
            base_coeffs,
            expert_offsets: expert_offsets.unwrap_or_default(),
            label_noise,
            seed,
        };
        Ok(PyDataset {
            inner: data::generate_synthetic(&spec).py_err()?.dataset,
        })
    }

    #[getter]
    fn n_records(&self) -> usize {
        self.inner.records().len()
    }

    #[getter]
    fn n_cases(&self) -> usize {
        self.inner.cases().len()
    }

    #[getter]
    fn n_experts(&self) -> usize {
        self.inner.n_experts()
    }

    #[getter]
    fn expert_names(&self) -> Vec<String> {
        self.inner
            .experts()
            .iter()
            .map(|e| e.name.clone())
            .collect()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    /// Per-assessment rows as (features, labels, labelers), ready for `fit_logistic`.
    fn long_format(&self) -> (Vec<Vec<f64>>, Vec<u8>, Vec<usize>) {
        let r = self.inner.records();
        (
            r.iter().map(|a| a.features.clone()).collect(),
            r.iter().map(|a| a.label).collect(),
            r.iter().map(|a| a.expert).collect(),
        )
    }

    /// Ids of cases whose recorded labels are not unanimous.
    fn disagreement_cases(&self) -> PyResult<Vec<String>> {
        Ok(data::disagreement_cases(&self.inner)
            .py_err()?
            .into_iter()
            .map(|c| c.as_str().to_string())
            .collect())
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        self.inner.write_wide_csv(file).py_err()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(records={}, cases={}, experts={}, features={})",
            self.inner.records().len(),
            self.inner.cases().len(),
            self.inner.n_experts(),
            self.inner.n_features()
        )
    }
}

/// Ridge-regularized logistic regression fitted by Newton's method.
#[pyclass(name = "LogisticModel", module = "second_opinion", frozen)]
struct PyLogisticModel {
    inner: glm::LogisticModel,
    report: FitReport,
}

#[pymethods]
impl PyLogisticModel {
    /// Intercept first.
    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.clone()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.report.iterations
    }

    #[getter]
    fn final_grad_norm(&self) -> f64 {
        self.report.final_grad_norm
    }

    #[getter]
    fn converged(&self) -> bool {
        self.report.converged
    }

    fn predict_proba(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_proba(&x).py_err()
    }

    fn decide(&self, proba: f64) -> u8 {
        self.inner.decide(proba)
    }

    fn __repr__(&self) -> String {
        format!(
            "LogisticModel(theta={:?}, lam={}, tau={})",
            self.inner.theta, self.inner.lambda, self.inner.tau
        )
    }
}

#[pyfunction]
#[pyo3(signature = (rows, labels, weights=None, lam=1e-4, tol=1e-8, max_iter=100, tau=0.5))]
fn fit_logistic(
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    weights: Option<Vec<f64>>,
    lam: f64,
    tol: f64,
    max_iter: usize,
    tau: f64,
) -> PyResult<PyLogisticModel> {
    let set = training_set(rows, labels)?;
    let weights = weights.unwrap_or_else(|| vec![1.0; set.len()]);
    let fit = glm::fit_weighted(&set, &weights, &fit_options(lam, tol, max_iter, tau)).py_err()?;
    Ok(PyLogisticModel {
        inner: fit.model,
        report: fit.report,
    })
}

/// Influence of each expert's training rows on a fitted pooled model.
#[pyclass(name = "InfluenceEngine", module = "second_opinion", frozen)]
struct PyInfluenceEngine {
    inner: influence::InfluenceEngine,
}

#[pymethods]
impl PyInfluenceEngine {
    #[new]
    fn new(
        model: PyRef<'_, PyLogisticModel>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        labelers: Vec<usize>,
        n_experts: usize,
    ) -> PyResult<Self> {
        let set = training_set(rows, labels)?;
        Ok(PyInfluenceEngine {
            inner: influence::InfluenceEngine::new(&model.inner, &set, &labelers, n_experts)
                .py_err()?,
        })
    }

    /// Expert index → d p(x) / d ε; experts without rows are left out.
    fn influence(&self, x: Vec<f64>) -> PyResult<BTreeMap<usize, f64>> {
        Ok(self.inner.influence(&x).py_err()?.values)
    }
}

/// Secant estimate of an expert's influence by refitting with that expert's
/// rows weighted 1 + epsilon.
#[pyfunction]
#[pyo3(signature = (rows, labels, labelers, x, expert, epsilon=1e-4, lam=1e-4, tol=1e-8, max_iter=100))]
#[allow(clippy::too_many_arguments)]
fn finite_difference_influence(
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    labelers: Vec<usize>,
    x: Vec<f64>,
    expert: usize,
    epsilon: f64,
    lam: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<f64> {
    let set = training_set(rows, labels)?;
    influence::finite_difference_oracle(
        &set,
        &labelers,
        &x,
        PerturbationSpec { expert, epsilon },
        &fit_options(lam, tol, max_iter, 0.5),
    )
    .py_err()
}

fn report(values: BTreeMap<usize, f64>, pred: u8) -> InfluenceReport {
    InfluenceReport {
        case: None,
        values,
        absent: vec![],
        model_proba: f64::NAN,
        model_pred: pred,
    }
}

#[pyfunction]
fn indep_always(probas: BTreeMap<usize, f64>, pred: u8) -> PyResult<Option<usize>> {
    Ok(recommend::indep_always(&probas, pred).py_err()?.chosen)
}

#[pyfunction]
#[pyo3(signature = (probas, pred, tau=0.5))]
fn indep_threshold(probas: BTreeMap<usize, f64>, pred: u8, tau: f64) -> PyResult<Option<usize>> {
    Ok(recommend::indep_threshold(&probas, pred, tau)
        .py_err()?
        .chosen)
}

#[pyfunction]
fn influence_always(values: BTreeMap<usize, f64>, pred: u8) -> PyResult<Option<usize>> {
    Ok(recommend::influence_always(&report(values, pred))
        .py_err()?
        .chosen)
}

#[pyfunction]
fn influence_signed(values: BTreeMap<usize, f64>, pred: u8) -> PyResult<Option<usize>> {
    Ok(recommend::influence_signed(&report(values, pred))
        .py_err()?
        .chosen)
}

#[pyfunction]
fn random_baseline(
    experts: Vec<usize>,
    seed: u64,
    case_id: String,
    pred: u8,
) -> PyResult<Option<usize>> {
    let case = CaseId::new(case_id).py_err()?;
    Ok(recommend::random_baseline(&experts, seed, &case, pred)
        .py_err()?
        .chosen)
}

fn summary_dict<'py>(py: Python<'py>, s: &EvaluationSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("overall", s.accuracy_overall())?;
    d.set_item("pred1", s.accuracy_pred1())?;
    d.set_item("pred0", s.accuracy_pred0())?;
    d.set_item("n_eval", s.n_eval_cases)?;
    d.set_item("n_pred1", s.n_pred1)?;
    d.set_item("n_pred0", s.n_pred0)?;
    d.set_item("abstention_rate", s.abstention_rate())?;
    let chosen: Vec<f64> = s.per_expert.iter().map(|t| t.chosen).collect();
    let correct: Vec<f64> = s.per_expert.iter().map(|t| t.correct).collect();
    d.set_item("chosen", chosen)?;
    d.set_item("correct", correct)?;
    Ok(d)
}

/// Runs the cross-validated evaluation described by a JSON config file.
///
/// Returns a dict keyed by method name. Report files are written only when
/// `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir=None, seed=None))]
fn evaluate<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig::load(&config_path).py_err()?;
    if let Some(seed) = seed {
        cfg.eval.seed = seed;
    }
    let (ds, outcome) = py
        .detach(|| -> second_opinion_core::Result<_> {
            let ds = cfg.load_dataset()?;
            let outcome = eval::run_experiment(&ds, &cfg)?;
            Ok((ds, outcome))
        })
        .py_err()?;
    if let Some(dir) = out_dir {
        cfg.output.dir = dir;
        eval::emit_report(&outcome, &ds, &cfg, &cfg.output.dir).py_err()?;
    }
    let result = PyDict::new(py);
    for s in outcome
        .summaries
        .iter()
        .chain([&outcome.baseline, &outcome.oracle])
    {
        result.set_item(s.method.name(), summary_dict(py, s)?)?;
    }
    Ok(result)
}

pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyLogisticModel>()?;
    m.add_class::<PyInfluenceEngine>()?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(finite_difference_influence, m)?)?;
    m.add_function(wrap_pyfunction!(indep_always, m)?)?;
    m.add_function(wrap_pyfunction!(indep_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(influence_always, m)?)?;
    m.add_function(wrap_pyfunction!(influence_signed, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}

#[pymodule]
fn second_opinion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
