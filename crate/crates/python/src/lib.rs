//! Python bindings: `import envylab`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use envylab::experiments::{self, AggregateRecord, ExperimentConfig, Metric};
use envylab::mechanisms::{self, QueueDiscipline};
use envylab::{envy, model, oracle, theory, verify, Mechanism, Seed};

fn to_py(e: envylab::Error) -> PyErr {
    match e {
        envylab::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// A random or user-supplied market with `n` students and `n` schools.
#[pyclass(name = "Market", frozen)]
pub struct PyMarket {
    inner: model::MarketInstance,
}

#[pymethods]
impl PyMarket {
    #[new]
    fn new(student_prefs: Vec<Vec<usize>>, school_priorities: Vec<Vec<usize>>) -> PyResult<Self> {
        let inner = model::MarketInstance::new(&student_prefs, &school_priorities).map_err(to_py)?;
        Ok(PyMarket { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, seed, replication = 0))]
    fn random(n: usize, seed: u64, replication: u64) -> PyResult<Self> {
        let inner = model::generate_market(n, Seed::new(seed, replication)).map_err(to_py)?;
        Ok(PyMarket { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn student_prefs(&self) -> Vec<Vec<usize>> {
        self.inner.student_prefs.to_rows()
    }

    #[getter]
    fn school_priorities(&self) -> Vec<Vec<usize>> {
        self.inner.school_priorities.to_rows()
    }

    /// Student-optimal stable matching, as a list school-by-student.
    fn deferred_acceptance(&self) -> Vec<usize> {
        mechanisms::deferred_acceptance(&self.inner).assignment().to_vec()
    }

    fn rsd(&self, order: Vec<usize>) -> PyResult<Vec<usize>> {
        let order = mechanisms::SerialOrder::new(order).map_err(to_py)?;
        Ok(mechanisms::rsd(&self.inner, &order).map_err(to_py)?.assignment().to_vec())
    }

    fn ttc(&self, endowment: Vec<usize>) -> PyResult<Vec<usize>> {
        let e = mechanisms::Endowment::new(endowment).map_err(to_py)?;
        Ok(mechanisms::ttc(&self.inner, &e).map_err(to_py)?.assignment().to_vec())
    }

    fn blocking_pairs(&self, assignment: Vec<usize>) -> PyResult<Vec<(usize, usize)>> {
        let m = self.matching(assignment)?;
        Ok(mechanisms::blocking_pairs(&self.inner, &m))
    }

    /// `(unenvied, envy_nobody)` for the given assignment.
    fn envy_counts(&self, assignment: Vec<usize>) -> PyResult<(usize, usize)> {
        let m = self.matching(assignment)?;
        let g = envy::build_envy_graph(&self.inner, &m);
        Ok((envy::unenvied_count(&g), envy::envy_nobody_count(&g)))
    }

    /// Out-edges of the envy graph: `edges[i]` lists the students `i` envies.
    fn envy_graph(&self, assignment: Vec<usize>) -> PyResult<Vec<Vec<usize>>> {
        let m = self.matching(assignment)?;
        let g = envy::build_envy_graph(&self.inner, &m);
        Ok((0..g.n()).map(|i| g.envies(i).to_vec()).collect())
    }

    /// `counts[k - 1]` students hold their `k`-th choice.
    fn rank_histogram(&self, assignment: Vec<usize>) -> PyResult<Vec<usize>> {
        let m = self.matching(assignment)?;
        Ok(envy::rank_histogram(&self.inner, &m).counts().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Market(n={})", self.inner.n())
    }
}

impl PyMarket {
    fn matching(&self, assignment: Vec<usize>) -> PyResult<model::Matching> {
        if assignment.len() != self.inner.n() {
            return Err(PyValueError::new_err("assignment length differs from market size"));
        }
        model::Matching::new(assignment).map_err(to_py)
    }
}

/// Outcome of one McVitie-Wilson run with lazily drawn student preferences.
#[pyclass(name = "SequentialRun", frozen, get_all)]
pub struct PySequentialRun {
    matching: Vec<usize>,
    ranks: Vec<usize>,
    total_proposals: usize,
    raw_draws: usize,
    unenvied: usize,
    envy_nobody: usize,
    singleton_draws: usize,
    under_demanded: Vec<usize>,
}

#[pyfunction]
#[pyo3(signature = (n, seed, replication = 0, queue = "lifo"))]
fn sequential_da(n: usize, seed: u64, replication: u64, queue: &str) -> PyResult<PySequentialRun> {
    let q: QueueDiscipline = parse(queue)?;
    let run = mechanisms::sequential_da(n, Seed::new(seed, replication), q).map_err(to_py)?;
    let degrees = envy::EnvyDegrees::from_sequential(&run);
    Ok(PySequentialRun {
        matching: run.matching.assignment().to_vec(),
        ranks: run.ranks(),
        total_proposals: run.log.entries.len(),
        raw_draws: run.log.raw_draws.len(),
        unenvied: degrees.unenvied(),
        envy_nobody: degrees.envy_nobody(),
        singleton_draws: envylab::singleton_count_from_da(&run.log),
        under_demanded: envy::under_demanded_schools(&run.log).into_iter().collect(),
    })
}

#[pyfunction]
fn harmonic(n: usize) -> PyResult<f64> {
    theory::harmonic(n).map_err(to_py)
}

/// Closed-form expectations as a dict.
#[pyfunction]
fn predict(py: Python<'_>, n: usize, mechanism: &str) -> PyResult<PyObject> {
    let p = theory::predict(n, parse(mechanism)?).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("n", p.n)?;
    d.set_item("mechanism", p.mechanism.as_str())?;
    d.set_item("unenvied_mean", p.unenvied_mean)?;
    d.set_item("unenvied_exact", p.unenvied_exact)?;
    d.set_item("envy_nobody_mean", p.envy_nobody_mean)?;
    d.set_item("envy_nobody_exact", p.envy_nobody_exact)?;
    d.set_item("mean_rank", p.mean_rank)?;
    d.set_item("mean_rank_exact", p.mean_rank_exact)?;
    Ok(d.into_any().unbind())
}

#[pyfunction]
fn geometric_rank_pmf(k: usize, n: usize) -> PyResult<f64> {
    theory::geometric_rank_pmf(k, n).map_err(to_py)
}

/// `(singleton_count, stopping_time)` of one coupon collector run.
#[pyfunction]
#[pyo3(signature = (n, seed, replication = 0))]
fn run_collector(n: usize, seed: u64, replication: u64) -> PyResult<(usize, usize)> {
    let r = envylab::run_collector(n, Seed::new(seed, replication)).map_err(to_py)?;
    Ok((r.singleton_count, r.stopping_time))
}

/// Exact expectations as `(numerator, denominator)` pairs.
#[pyfunction]
fn exact_expectation(n: usize, mechanism: &str) -> PyResult<((i128, i128), (i128, i128), u64)> {
    let e = match parse::<Mechanism>(mechanism)? {
        Mechanism::Da => oracle::enumerate_expected_unenvied_da(n),
        Mechanism::Rsd => oracle::enumerate_expected_rsd(n),
        Mechanism::Ttc => return Err(PyValueError::new_err("exact enumeration covers da and rsd")),
    }
    .map_err(to_py)?;
    let pair = |r: &oracle::Rational| (*r.numer(), *r.denom());
    Ok((pair(&e.unenvied_mean), pair(&e.envy_nobody_mean), e.profile_count))
}

/// Runs the exhaustive suite; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (max_n = 3))]
fn verify_suite(py: Python<'_>, max_n: usize) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py
        .allow_threads(|| verify::run_suite(max_n, oracle::DEFAULT_MAX_PROFILE_N, verify::VerifyHooks::default()))
        .map_err(to_py)?;
    Ok(checks.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

#[pyclass(name = "AggregateRecord", frozen, get_all)]
pub struct PyAggregateRecord {
    n: usize,
    mechanism: String,
    metric: String,
    mean: f64,
    std_error: f64,
    replications: usize,
    prediction: f64,
    prediction_exact: bool,
}

impl From<AggregateRecord> for PyAggregateRecord {
    fn from(r: AggregateRecord) -> Self {
        PyAggregateRecord {
            n: r.n,
            mechanism: r.mechanism.to_string(),
            metric: r.metric.to_string(),
            mean: r.mean,
            std_error: r.std_error,
            replications: r.replications,
            prediction: r.prediction,
            prediction_exact: r.prediction_exact,
        }
    }
}

#[pymethods]
impl PyAggregateRecord {
    fn __repr__(&self) -> String {
        format!(
            "AggregateRecord(n={}, mechanism={:?}, metric={:?}, mean={}, std_error={}, prediction={})",
            self.n, self.mechanism, self.metric, self.mean, self.std_error, self.prediction
        )
    }
}

/// Monte Carlo sweep; writes CSV when `out` is given.
#[pyfunction]
#[pyo3(signature = (sizes, replications = 2000, mechanisms = vec!["da".to_string()], metrics = None, seed = 1, queue = "lifo", threads = None, out = None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    sizes: Vec<usize>,
    replications: usize,
    mechanisms: Vec<String>,
    metrics: Option<Vec<String>>,
    seed: u64,
    queue: &str,
    threads: Option<usize>,
    out: Option<std::path::PathBuf>,
) -> PyResult<Vec<PyAggregateRecord>> {
    let mechanisms = mechanisms.iter().map(|m| parse::<Mechanism>(m)).collect::<PyResult<Vec<_>>>()?;
    let mut config = ExperimentConfig {
        sizes,
        replications,
        mechanisms,
        master_seed: seed,
        queue: parse(queue)?,
        threads,
        output_path: out,
        ..Default::default()
    };
    if let Some(ms) = metrics {
        config.metrics = ms.iter().map(|m| parse::<Metric>(m)).collect::<PyResult<Vec<_>>>()?;
    }
    let output = py.allow_threads(|| experiments::run_experiment(&config)).map_err(to_py)?;
    Ok(output.records.into_iter().map(Into::into).collect())
}

#[pyfunction]
fn read_csv(path: std::path::PathBuf) -> PyResult<Vec<PyAggregateRecord>> {
    Ok(experiments::read_csv(&path).map_err(to_py)?.into_iter().map(Into::into).collect())
}

#[pymodule]
#[pyo3(name = "envylab")]
fn envylab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarket>()?;
    m.add_class::<PySequentialRun>()?;
    m.add_class::<PyAggregateRecord>()?;
    m.add_function(wrap_pyfunction!(sequential_da, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_rank_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(run_collector, m)?)?;
    m.add_function(wrap_pyfunction!(exact_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(read_csv, m)?)?;
    Ok(())
}
