//! Python bindings for `kfsp_core`.
//!
//! Placements and attacks are passed as bit strings (`"0101"`) or lists of
//! 0/1 integers, and come back as lists of 0/1 integers. Matrices are lists
//! of rows. Infinite objectives are returned as `float("inf")`.

use kfsp_core::experiment::{gap_experiment, ExperimentConfig, Problem};
use kfsp_core::instance::{self, NormalConfig};
use kfsp_core::kalman::{dare_solve, CovariancePair, DareOptions, IndicatorVector, SensorNoise};
use kfsp_core::linalg;
use kfsp_core::oracle::OracleConfig;
use kfsp_core::{
    bfs_distances, brute_gkfsa, brute_gkfsp, brute_rgkfsp, closed_form_covariance,
    compute_noise_bound, graph_from_matrix, knapsack_dp, solve_gkfsa, solve_gkfsp, solve_rgkfsp,
    DistanceMap, Error, KnapsackInstance, NetworkSystem, ProblemInstance, SolveReport,
};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. } | Error::Unstable { .. } => PyArithmeticError::new_err(e.to_string()),
        Error::Mismatch(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[derive(FromPyObject)]
enum Indicator {
    Bits(String),
    List(Vec<u8>),
}

impl Indicator {
    fn resolve(self, n: usize) -> PyResult<IndicatorVector> {
        let mu = match self {
            Indicator::Bits(s) => IndicatorVector::parse(&s).map_err(to_py)?,
            Indicator::List(v) => {
                if v.iter().any(|&b| b > 1) {
                    return Err(PyValueError::new_err("indicator entries must be 0 or 1"));
                }
                IndicatorVector::new(v.into_iter().map(|b| b == 1).collect())
            }
        };
        if mu.len() != n {
            return Err(PyValueError::new_err(format!(
                "indicator has {} entries, expected {n}",
                mu.len()
            )));
        }
        Ok(mu)
    }
}

fn bits(mu: &IndicatorVector) -> Vec<u32> {
    mu.bits().iter().map(|&b| b as u32).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    linalg::from_rows(&rows).ok_or_else(|| PyValueError::new_err("matrix rows must have equal length"))
}

/// A problem instance: dynamics, input node, noise levels, costs and budgets.
#[pyclass(module = "kfsp", name = "Instance", skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: ProblemInstance,
}

impl PyInstance {
    fn distances(&self) -> PyResult<DistanceMap> {
        let g = graph_from_matrix(self.inner.system.a(), kfsp_core::graph::DEFAULT_ZERO_TOL)
            .map_err(to_py)?;
        bfs_distances(&g, self.inner.system.input_node()).map_err(to_py)
    }
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (a, input_node, h, placement_budget, f, attack_budget, sigma_w2 = 1.0, sigma_v2 = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        a: Vec<Vec<f64>>,
        input_node: usize,
        h: Vec<u64>,
        placement_budget: u64,
        f: Vec<u64>,
        attack_budget: u64,
        sigma_w2: f64,
        sigma_v2: f64,
    ) -> PyResult<Self> {
        let a = matrix(a)?;
        let n = a.nrows();
        let system = NetworkSystem::new(a, input_node, sigma_w2, SensorNoise::isotropic(n, sigma_v2))
            .map_err(to_py)?;
        let costs = kfsp_core::CostModel::new(h, placement_budget, f, attack_budget).map_err(to_py)?;
        let inner = ProblemInstance::new(system, costs, Default::default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        instance::load_instance(&path)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        instance::from_json(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        instance::to_json(&self.inner).map_err(to_py)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        instance::save_instance(&self.inner, &path).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (n, extra_edges, seed))]
    fn row_stochastic(n: usize, extra_edges: usize, seed: u64) -> PyResult<Self> {
        instance::generate_row_stochastic_instance(n, extra_edges, seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (n = 10, edge_count = 15, sigma_w2 = 0.1, sigma_v2 = 0.0, seed = 0))]
    fn normal(n: usize, edge_count: usize, sigma_w2: f64, sigma_v2: f64, seed: u64) -> PyResult<Self> {
        instance::generate_normal_instance(n, edge_count, sigma_w2, sigma_v2, seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Copy with isotropic sensor noise `sigma_v2 * I`.
    fn with_sensor_noise(&self, sigma_v2: f64) -> PyResult<Self> {
        let n = self.inner.n();
        let system = self
            .inner
            .system
            .with_noise(SensorNoise::isotropic(n, sigma_v2))
            .map_err(to_py)?;
        Ok(Self {
            inner: ProblemInstance {
                system,
                ..self.inner.clone()
            },
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        linalg::to_rows(self.inner.system.a())
    }

    #[getter]
    fn input_node(&self) -> usize {
        self.inner.system.input_node()
    }

    /// Hop distance from the input node to every node (`None` if unreachable).
    fn distances_from_input(&self) -> PyResult<Vec<Option<usize>>> {
        Ok(self.distances()?.distances().iter().map(|d| d.finite()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(n={}, input_node={}, H={}, F={})",
            self.inner.n(),
            self.inner.system.input_node(),
            self.inner.costs.placement_budget,
            self.inner.costs.attack_budget
        )
    }
}

fn report<'py>(py: Python<'py>, r: &SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("chosen", bits(&r.chosen))?;
    d.set_item("attack", r.attack.as_ref().map(bits))?;
    d.set_item("trace_priori", r.objective.value())?;
    d.set_item("trace_posteriori", r.objective_posteriori.value())?;
    d.set_item(
        "zeta",
        match r.zeta {
            kfsp_core::Zeta::Finite(z) => Some(z),
            kfsp_core::Zeta::Unbounded => None,
        },
    )?;
    d.set_item("spent", r.spent)?;
    Ok(d)
}

/// Optimal single-sensor placement under zero sensor noise.
#[pyfunction]
fn place<'py>(py: Python<'py>, inst: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let r = solve_gkfsp(&inst.inner.system, &inst.inner.costs, &inst.distances()?).map_err(to_py)?;
    report(py, &r)
}

/// Optimal attack on `placement` under zero sensor noise.
#[pyfunction]
fn attack<'py>(
    py: Python<'py>,
    inst: &PyInstance,
    placement: Indicator,
) -> PyResult<Bound<'py, PyDict>> {
    let mu = placement.resolve(inst.inner.n())?;
    let r = solve_gkfsa(
        &inst.inner.system,
        &inst.inner.costs,
        &mu,
        &inst.distances()?,
        &DareOptions::default(),
    )
    .map_err(to_py)?;
    report(py, &r)
}

/// Attack-resilient placement under zero sensor noise.
#[pyfunction]
fn resilient<'py>(py: Python<'py>, inst: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let r = solve_rgkfsp(
        &inst.inner.system,
        &inst.inner.costs,
        &inst.distances()?,
        &DareOptions::default(),
    )
    .map_err(to_py)?;
    report(py, &r)
}

/// Brute-force optimum for `problem` in {"gkfsp", "gkfsa", "rgkfsp"}.
#[pyfunction]
#[pyo3(signature = (inst, problem, placement = None))]
fn brute_force<'py>(
    py: Python<'py>,
    inst: &PyInstance,
    problem: &str,
    placement: Option<Indicator>,
) -> PyResult<Bound<'py, PyDict>> {
    let problem: Problem = problem.parse().map_err(to_py)?;
    let cfg = OracleConfig::default();
    let (sys, costs) = (&inst.inner.system, &inst.inner.costs);
    let r = match problem {
        Problem::Gkfsp => brute_gkfsp(sys, costs, &cfg),
        Problem::Gkfsa => {
            let mu = match placement {
                Some(p) => p.resolve(inst.inner.n())?,
                None => IndicatorVector::ones(inst.inner.n()),
            };
            brute_gkfsa(sys, costs, &mu, &cfg)
        }
        Problem::Rgkfsp => brute_rgkfsp(sys, costs, &cfg),
    }
    .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("best", bits(&r.best))?;
    d.set_item("optimal", r.optimal.iter().map(bits).collect::<Vec<_>>())?;
    d.set_item("objective", r.objective.value())?;
    d.set_item("worst_attack", r.worst_attack.as_ref().map(bits))?;
    d.set_item("evaluated_count", r.evaluated_count)?;
    Ok(d)
}

type CovPair = Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>;

fn cov_rows(c: CovariancePair) -> CovPair {
    match c {
        CovariancePair::Finite { priori, posteriori } => {
            Some((linalg::to_rows(&priori), linalg::to_rows(&posteriori)))
        }
        CovariancePair::Infinite => None,
    }
}

/// Steady-state (a priori, a posteriori) covariances by Riccati iteration,
/// or `None` when they are unbounded.
#[pyfunction]
fn steady_covariance(inst: &PyInstance, placement: Indicator) -> PyResult<CovPair> {
    let mu = placement.resolve(inst.inner.n())?;
    dare_solve(&inst.inner.system, &mu, &DareOptions::default())
        .map(cov_rows)
        .map_err(to_py)
}

/// Zero-noise steady covariances from the distance-based closed form.
#[pyfunction]
fn closed_form(inst: &PyInstance, placement: Indicator) -> PyResult<CovPair> {
    let mu = placement.resolve(inst.inner.n())?;
    closed_form_covariance(&inst.inner.system, &mu, &inst.distances()?)
        .map(cov_rows)
        .map_err(to_py)
}

/// Noisy-sensor suboptimality bound for `placement`.
#[pyfunction]
fn noise_bound<'py>(
    py: Python<'py>,
    inst: &PyInstance,
    placement: Indicator,
) -> PyResult<Bound<'py, PyDict>> {
    let mu = placement.resolve(inst.inner.n())?;
    let r = compute_noise_bound(&inst.inner.system, &mu, &DareOptions::default()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("e", linalg::to_rows(&r.e))?;
    d.set_item("e_post", linalg::to_rows(&r.e_post))?;
    d.set_item("trace_e", r.trace_e)?;
    d.set_item("trace_e_post", r.trace_e_post)?;
    d.set_item("bound_priori", r.bound_priori)?;
    d.set_item("bound_posteriori", r.bound_posteriori)?;
    d.set_item("closed_loop_radius", r.closed_loop_radius)?;
    Ok(d)
}

/// Exact 0/1 knapsack; returns (indicator, value, used capacity).
#[pyfunction]
fn knapsack(values: Vec<u64>, sizes: Vec<u64>, capacity: u64) -> PyResult<(Vec<u32>, u64, u64)> {
    let inst = KnapsackInstance::new(values, sizes, capacity).map_err(to_py)?;
    let sol = knapsack_dp(&inst);
    Ok((
        sol.indicator.iter().map(|&b| b as u32).collect(),
        sol.value,
        sol.used,
    ))
}

/// Rows `(seed, sigma_v2, opt, alg, bound, subopt)` of the noisy-sensor gap
/// experiment on random graphs.
#[pyfunction]
#[pyo3(signature = (problem, realizations, sigma_v2, seed = 0, n = 10, edge_count = 15))]
fn gap_rows(
    problem: &str,
    realizations: usize,
    sigma_v2: Vec<f64>,
    seed: u64,
    n: usize,
    edge_count: usize,
) -> PyResult<Vec<(u64, f64, f64, f64, f64, f64)>> {
    let cfg = ExperimentConfig {
        problem: problem.parse().map_err(to_py)?,
        realizations,
        sigma_v2,
        seed,
        graph: NormalConfig {
            n,
            edge_count,
            ..ExperimentConfig::default().graph
        },
        ..ExperimentConfig::default()
    };
    let rows = gap_experiment(&cfg).map_err(to_py)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.seed, r.sigma_v2, r.opt, r.alg, r.bound, r.subopt))
        .collect())
}

#[pymodule]
fn kfsp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(place, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(resilient, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(steady_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(noise_bound, m)?)?;
    m.add_function(wrap_pyfunction!(knapsack, m)?)?;
    m.add_function(wrap_pyfunction!(gap_rows, m)?)?;
    Ok(())
}
