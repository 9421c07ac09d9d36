//! Python bindings for the `scopefe` feature-engineering pipeline.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use scopefe::assoc::{self, SimilarityMatrix};
use scopefe::cluster::{self, FcmParams};
use scopefe::oper::{self, Operator};
use scopefe::pipeline::{self, ClusterMode, PipelineConfig};
use scopefe::tabular::{self, ColumnKind, LoadOptions, Task};

fn value_err(e: scopefe::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_task(task: Option<&str>) -> PyResult<Option<Task>> {
    match task {
        None => Ok(None),
        Some("regression") => Ok(Some(Task::Regression)),
        Some("binary") => Ok(Some(Task::Binary)),
        Some(other) => Err(PyValueError::new_err(format!("task must be `regression` or `binary`, got `{other}`"))),
    }
}

fn kind_name(k: ColumnKind) -> &'static str {
    match k {
        ColumnKind::Numeric => "numeric",
        ColumnKind::Categorical => "categorical",
    }
}

/// A loaded table: typed feature columns plus a target.
#[pyclass(frozen, module = "scopefe_py")]
pub struct Dataset {
    inner: tabular::Dataset,
}

#[pymethods]
impl Dataset {
    /// Loads a CSV file. `task` is `"regression"`, `"binary"` or inferred.
    #[staticmethod]
    #[pyo3(signature = (path, target, task=None, categorical_threshold=20))]
    fn from_csv(path: &str, target: &str, task: Option<&str>, categorical_threshold: usize) -> PyResult<Self> {
        let mut opts = LoadOptions::new(target);
        opts.task = parse_task(task)?;
        opts.categorical_threshold = categorical_threshold;
        Ok(Dataset { inner: tabular::load_csv(path, &opts).map_err(value_err)? })
    }

    /// Parses CSV text with a header row.
    #[staticmethod]
    #[pyo3(signature = (text, target, task=None, categorical_threshold=20))]
    fn from_text(text: &str, target: &str, task: Option<&str>, categorical_threshold: usize) -> PyResult<Self> {
        let mut opts = LoadOptions::new(target);
        opts.task = parse_task(task)?;
        opts.categorical_threshold = categorical_threshold;
        Ok(Dataset { inner: tabular::read_csv(text.as_bytes(), &opts).map_err(value_err)? })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.features().iter().map(|f| f.name.clone()).collect()
    }

    #[getter]
    fn kinds(&self) -> Vec<&'static str> {
        self.inner.features().iter().map(|f| kind_name(f.kind)).collect()
    }

    #[getter]
    fn task(&self) -> &'static str {
        match self.inner.task() {
            Task::Regression => "regression",
            Task::Binary => "binary",
        }
    }

    #[getter]
    fn target(&self) -> Vec<f64> {
        self.inner.target().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(rows={}, features={}, task={})", self.n_rows(), self.n_features(), self.task())
    }
}

/// Pipeline settings. Unset fields keep their defaults.
#[pyclass(module = "scopefe_py", skip_from_py_object)]
#[derive(Clone)]
pub struct Config {
    inner: PipelineConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (seed=None, clustering=None, tau=None, probing=None, reliability=None, top_k=None))]
    fn new(
        seed: Option<u64>,
        clustering: Option<&str>,
        tau: Option<usize>,
        probing: Option<bool>,
        reliability: Option<bool>,
        top_k: Option<usize>,
    ) -> PyResult<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(mode) = clustering {
            cfg.clustering.mode = match mode {
                "off" => ClusterMode::Off,
                "hard" => ClusterMode::Hard,
                "soft" => ClusterMode::Soft,
                other => return Err(PyValueError::new_err(format!("clustering must be off, hard or soft, got `{other}`"))),
            };
        }
        if let Some(t) = tau {
            cfg.clustering.tau = t;
        }
        if let Some(p) = probing {
            cfg.probing.enabled = p;
        }
        if let Some(r) = reliability {
            cfg.reliability.enabled = r;
        }
        if let Some(k) = top_k {
            cfg.top_k = k;
        }
        cfg.validate().map_err(value_err)?;
        Ok(Config { inner: cfg })
    }

    /// Everything off: the unconstrained expand-and-reduce baseline.
    #[staticmethod]
    fn all_off() -> Self {
        Config { inner: PipelineConfig::all_off() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: PipelineConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(value_err)?;
        Ok(Config { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }
}

/// Result of a full pipeline run.
#[pyclass(frozen, module = "scopefe_py")]
pub struct RunResult {
    #[pyo3(get)]
    report_json: String,
    #[pyo3(get)]
    engineered_csv: String,
    #[pyo3(get)]
    selected: Vec<String>,
}

#[pyfunction]
fn pearson_abs(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    assoc::pearson_abs(&x, &y).map_err(value_err)
}

/// Category codes are non-negative integers; `None` marks a missing cell.
#[pyfunction]
fn cramers_v(x: Vec<Option<u32>>, y: Vec<Option<u32>>) -> PyResult<f64> {
    assoc::cramers_v(&x, &y).map_err(value_err)
}

#[pyfunction]
fn eta_squared(categories: Vec<Option<u32>>, values: Vec<f64>) -> PyResult<f64> {
    assoc::eta_squared(&categories, &values).map_err(value_err)
}

/// Feature similarity matrix over the training partition `config` selects.
#[pyfunction]
#[pyo3(signature = (ds, config=None))]
fn similarity(ds: &Dataset, config: Option<&Config>) -> PyResult<Vec<Vec<f64>>> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let (train, _) = pipeline::partition(&ds.inner, &cfg).map_err(value_err)?;
    let s = pipeline::similarity_stage(&ds.inner, &train).map_err(value_err)?;
    Ok((0..s.order()).map(|i| s.row(i).to_vec()).collect())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SimilarityMatrix> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("similarity matrix must be square"));
    }
    SimilarityMatrix::from_rows(d, rows.concat()).map_err(value_err)
}

#[pyfunction]
fn cluster_count(d: usize, tau: usize) -> PyResult<usize> {
    cluster::cluster_count(d, tau).map_err(value_err)
}

/// Hard cluster label per feature.
#[pyfunction]
fn hard_cluster(similarity: Vec<Vec<f64>>, tau: usize) -> PyResult<Vec<usize>> {
    Ok(cluster::hard_cluster(&matrix(similarity)?, tau).map_err(value_err)?.labels)
}

/// Soft cluster label sets per feature (spectral embedding, fuzzy c-means,
/// threshold `K/10`).
#[pyfunction]
#[pyo3(signature = (similarity, tau, m=2.0, seed=0))]
fn soft_cluster(similarity: Vec<Vec<f64>>, tau: usize, m: f64, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let s = matrix(similarity)?;
    let k = cluster::cluster_count(s.order(), tau).map_err(value_err)?;
    let emb = cluster::spectral_embed(&s, k).map_err(value_err)?;
    let u = cluster::fcm(&emb, k, FcmParams { m, ..FcmParams::default() }, seed).map_err(value_err)?;
    Ok(cluster::soft_assign(&u, k).sets)
}

#[pyfunction]
fn predicted_reduction(d: usize, p: usize, tau: usize, n_top: usize) -> PyResult<f64> {
    pipeline::predicted_reduction(d, p, tau, n_top).map_err(value_err)
}

/// Names of the default operator roster.
#[pyfunction]
fn default_operators() -> Vec<&'static str> {
    oper::default_operator_set().into_iter().map(Operator::name).collect()
}

/// Number of candidates the operators admit over `ds` without clustering.
#[pyfunction]
#[pyo3(signature = (ds, operators=None))]
fn unconstrained_count(ds: &Dataset, operators: Option<Vec<String>>) -> PyResult<usize> {
    let ops = match operators {
        None => oper::default_operator_set(),
        Some(names) => names.iter().map(|n| Operator::from_name(n)).collect::<scopefe::Result<_>>().map_err(value_err)?,
    };
    Ok(oper::unconstrained_count(ds.inner.features(), &ops).total())
}

/// Runs the full pipeline. Raises `RuntimeError` carrying the incomplete
/// report when a stage fails.
#[pyfunction]
#[pyo3(signature = (ds, config=None))]
fn run(py: Python<'_>, ds: &Dataset, config: Option<&Config>) -> PyResult<RunResult> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let data = &ds.inner;
    let out = py.detach(|| pipeline::run(data, &cfg)).map_err(|f| {
        let report = serde_json::to_string(&*f.report).unwrap_or_default();
        PyRuntimeError::new_err((f.to_string(), report))
    })?;
    Ok(RunResult {
        report_json: serde_json::to_string(&out.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?,
        engineered_csv: out.engineered.to_csv(data),
        selected: out.report.selected.iter().map(|s| s.expression.clone()).collect(),
    })
}

#[pymodule]
fn scopefe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Config>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(pearson_abs, m)?)?;
    m.add_function(wrap_pyfunction!(cramers_v, m)?)?;
    m.add_function(wrap_pyfunction!(eta_squared, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_count, m)?)?;
    m.add_function(wrap_pyfunction!(hard_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(soft_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(default_operators, m)?)?;
    m.add_function(wrap_pyfunction!(unconstrained_count, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
