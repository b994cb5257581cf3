//! Python bindings: networks, objectives, the continuous and discrete runs,
//! and the config-driven experiment runner.

use std::path::PathBuf;

use cluster_dcg::cli::{execute, Command, Options, OUT_ENV};
use cluster_dcg::decomposition::decompose as decompose_state;
use cluster_dcg::discrete::{run_discrete as run_discrete_core, DiscreteConfig};
use cluster_dcg::dynamics::{integrate as integrate_core, GammaSchedule, IntegratorConfig};
use cluster_dcg::graph::{
    build_cluster_network, check_cluster_assumption, load_network, save_network, spectral_constants, ClusterNetwork,
    ClusterSpec,
};
use cluster_dcg::objective::{load_objective, make_random_objective, QuadraticObjective};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts through JSON so every `Serialize` type arrives as plain dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err("ragged matrix".into());
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: ClusterNetwork,
}

#[pymethods]
impl PyNetwork {
    #[new]
    fn new(cluster_sizes: Vec<usize>, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        ClusterNetwork::from_edges(&cluster_sizes, &edges).map(|inner| Self { inner }).map_err(value_err)
    }

    /// Samples a network from a JSON cluster spec.
    #[staticmethod]
    fn generate(spec_json: &str) -> PyResult<Self> {
        let spec: ClusterSpec = serde_json::from_str(spec_json).map_err(value_err)?;
        build_cluster_network(&spec).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_network(path).map(|inner| Self { inner }).map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_network(&self.inner, path).map_err(value_err)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_clusters(&self) -> usize {
        self.inner.num_clusters()
    }

    #[getter]
    fn cluster_sizes(&self) -> Vec<usize> {
        self.inner.cluster_sizes().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn check_connectivity(&self) -> PyResult<()> {
        self.inner.check_connectivity().map_err(value_err)
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.laplacian())
    }

    fn aggregate_laplacian(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.aggregate_laplacian())
    }

    fn spectral_constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &spectral_constants(&self.inner).map_err(value_err)?)
    }

    /// The cluster-structure condition for gradient bound `grad_bound` and strong convexity `mu`.
    fn check_assumption<'py>(&self, py: Python<'py>, grad_bound: f64, mu: f64) -> PyResult<Bound<'py, PyAny>> {
        let sc = spectral_constants(&self.inner).map_err(value_err)?;
        to_py(py, &check_cluster_assumption(&sc, grad_bound, mu).map_err(value_err)?)
    }

    fn __repr__(&self) -> String {
        format!("Network(cluster_sizes={:?}, edges={})", self.inner.cluster_sizes(), self.inner.edges().len())
    }
}

#[pyclass(name = "Objective", frozen)]
struct PyObjective {
    inner: QuadraticObjective,
}

#[pymethods]
impl PyObjective {
    #[staticmethod]
    #[pyo3(signature = (n, d, l, seed = 0, conditioning = 1.0))]
    fn random(n: usize, d: usize, l: usize, seed: u64, conditioning: f64) -> PyResult<Self> {
        make_random_objective(n, d, l, seed, conditioning).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_objective(path).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn x_star(&self) -> Vec<f64> {
        self.inner.x_star().iter().copied().collect()
    }

    #[getter]
    fn f_star(&self) -> f64 {
        self.inner.f_star()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.inner.value(&DVector::from_vec(x)))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.gradient(&DVector::from_vec(x)).iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Objective(nodes={}, dim={}, mu={:.6})", self.inner.num_nodes(), self.inner.dim(), self.inner.mu())
    }
}

impl PyObjective {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() == self.inner.dim() {
            Ok(())
        } else {
            Err(value_err(format!("expected {} entries, got {}", self.inner.dim(), x.len())))
        }
    }
}

fn state(x: Option<Vec<Vec<f64>>>, n: usize, d: usize) -> PyResult<DMatrix<f64>> {
    match x {
        None => Ok(DMatrix::zeros(n, d)),
        Some(rows) => {
            let m = to_matrix(&rows).map_err(value_err)?;
            if m.shape() != (n, d) {
                return Err(value_err(format!("state is {:?}, expected ({n}, {d})", m.shape())));
            }
            Ok(m)
        }
    }
}

/// `{xbar, y, e_x, e_y}` for an N×d state.
#[pyfunction]
fn decompose<'py>(py: Python<'py>, net: &PyNetwork, x: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let m = to_matrix(&x).map_err(value_err)?;
    let dec = decompose_state(&net.inner, &m).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("xbar", dec.xbar.iter().copied().collect::<Vec<_>>())?;
    out.set_item("y", to_rows(&dec.y))?;
    out.set_item("e_x", to_rows(&dec.e_x))?;
    out.set_item("e_y", to_rows(&dec.e_y))?;
    Ok(out)
}

/// Integrates the continuous flow; `gamma` is "inverse_time" or "zero".
#[pyfunction]
#[pyo3(signature = (net, obj, t_end, x0 = None, t0 = 1.0, dt = None, sample_every = 10, gamma = "inverse_time"))]
#[allow(clippy::too_many_arguments)]
fn integrate<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    obj: &PyObjective,
    t_end: f64,
    x0: Option<Vec<Vec<f64>>>,
    t0: f64,
    dt: Option<f64>,
    sample_every: usize,
    gamma: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let gamma = match gamma {
        "inverse_time" => GammaSchedule::InverseTime { mu: obj.inner.mu() },
        "zero" => GammaSchedule::Zero,
        other => return Err(value_err(format!("unknown gamma schedule {other:?}"))),
    };
    let x0 = state(x0, net.inner.num_nodes(), obj.inner.dim())?;
    let cfg = IntegratorConfig {
        t0,
        t_end,
        dt: dt.unwrap_or_else(|| IntegratorConfig::default_dt(&net.inner)),
        sample_every,
        gamma,
    };
    let traj = py
        .detach(|| integrate_core(&net.inner, &obj.inner, &x0, &cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let samples = traj.samples();
    let out = PyDict::new(py);
    out.set_item("t", samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("v_ex", samples.iter().map(|s| s.lyapunov.v_ex).collect::<Vec<_>>())?;
    out.set_item("v_ey", samples.iter().map(|s| s.lyapunov.v_ey).collect::<Vec<_>>())?;
    out.set_item("v_xbar", samples.iter().map(|s| s.lyapunov.v_xbar).collect::<Vec<_>>())?;
    out.set_item("grad_norm_max", traj.grad_norm_max())?;
    out.set_item("final_state", to_rows(&traj.last().state))?;
    Ok(out)
}

/// Discrete iterations with Metropolis weights and `γ(k) = 1/k`.
#[pyfunction]
#[pyo3(signature = (net, obj, iterations, x0 = None, track = None, record_every = 1))]
fn run_discrete<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    obj: &PyObjective,
    iterations: usize,
    x0: Option<Vec<Vec<f64>>>,
    track: Option<Vec<usize>>,
    record_every: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let x0 = state(x0, net.inner.num_nodes(), obj.inner.dim())?;
    let mut cfg = DiscreteConfig::new(iterations);
    cfg.track = track.unwrap_or_else(|| vec![0]);
    cfg.record_every = record_every;
    let run = py
        .detach(|| run_discrete_core(&net.inner, &obj.inner, &x0, &cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    let col = |f: fn(&cluster_dcg::discrete::DiscreteRecord) -> f64| run.records.iter().map(f).collect::<Vec<_>>();
    out.set_item("k", run.records.iter().map(|r| r.k).collect::<Vec<_>>())?;
    out.set_item("gamma", col(|r| r.gamma))?;
    out.set_item("mean_gap", col(|r| r.mean_gap))?;
    out.set_item("v_ex", col(|r| r.v_ex))?;
    out.set_item("v_ey", col(|r| r.v_ey))?;
    let gaps: Vec<Vec<f64>> =
        (0..run.tracked.len()).map(|slot| run.records.iter().map(|r| r.gaps[slot]).collect()).collect();
    out.set_item("tracked", run.tracked.clone())?;
    out.set_item("gaps", gaps)?;
    out.set_item("final_gaps", run.final_gaps.clone())?;
    out.set_item("local_sync_k", run.local_sync_k)?;
    Ok(out)
}

/// Runs (or verifies) a JSON experiment config and returns the report with
/// `exit_code`, `out_dir` and `files` added.
#[pyfunction]
#[pyo3(signature = (config, out = None, seed = None, verify_only = false))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    verify_only: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let command = if verify_only { Command::Verify { config } } else { Command::Run { config } };
    let opts = Options { out, seed, env_out: std::env::var_os(OUT_ENV).map(PathBuf::from) };
    let outcome = py.detach(|| execute(&command, &opts)).map_err(value_err)?;
    let report = to_py(py, &outcome.report)?;
    report.set_item("exit_code", outcome.exit_code())?;
    report.set_item("out_dir", outcome.out_dir.to_string_lossy().into_owned())?;
    let files: Vec<String> = outcome.files.iter().map(|p| p.to_string_lossy().into_owned()).collect();
    report.set_item("files", files)?;
    Ok(report)
}

#[pymodule]
pub fn cluster_dcg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyObjective>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = to_matrix(&rows).unwrap();
        assert_eq!(m[(2, 1)], 6.0);
        assert_eq!(to_rows(&m), rows);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(to_matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(to_matrix(&[]).unwrap().shape(), (0, 0));
    }
}
