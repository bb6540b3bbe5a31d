//! Problem instances: the bundled `(A, i0, sigma_w^2, V, h, H, f, F)` tuple,
//! random generators and the JSON file format.
//!
//! Node indices are 0-based throughout, in files as well as in code.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    bfs_distances, check_distance_assumption, graph_from_matrix, is_strongly_connected,
    DEFAULT_ZERO_TOL,
};
use crate::kalman::{
    check_detectable, check_stabilizable, IndicatorVector, NetworkSystem, SensorNoise,
    DEFAULT_RANK_TOL,
};
use crate::linalg;
use crate::solvers::CostModel;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejections: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub system: NetworkSystem,
    pub costs: CostModel,
    pub metadata: Metadata,
}

/// Outcome of the structural checks the graph-based solvers rely on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssumptionReport {
    pub strongly_connected: bool,
    pub all_reachable: bool,
    pub path_weights_nonvanishing: bool,
    pub stabilizable: bool,
    pub detectable_single_sensors: bool,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.all_reachable
            && self.path_weights_nonvanishing
            && self.stabilizable
            && self.detectable_single_sensors
    }
}

impl ProblemInstance {
    pub fn new(system: NetworkSystem, costs: CostModel, metadata: Metadata) -> Result<Self> {
        if costs.len() != system.n() {
            return Err(Error::Validation(format!(
                "field `h`/`f`: expected {} entries, found {}",
                system.n(),
                costs.len()
            )));
        }
        Ok(Self {
            system,
            costs,
            metadata,
        })
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// Detectability for every nonempty placement follows from detectability
    /// for every single sensor, since adding rows to `C` only adds rank.
    pub fn check_assumptions(&self) -> Result<AssumptionReport> {
        let a = self.system.a();
        let g = graph_from_matrix(a, DEFAULT_ZERO_TOL)?;
        let d = bfs_distances(&g, self.system.input_node())?;
        let path = check_distance_assumption(a, &d, DEFAULT_ZERO_TOL);
        let n = self.n();
        let detectable_single_sensors = (0..n).all(|j| {
            let mu = IndicatorVector::from_support(n, &[j]).expect("in range");
            check_detectable(a, &mu, DEFAULT_RANK_TOL)
        });
        Ok(AssumptionReport {
            strongly_connected: is_strongly_connected(&g),
            all_reachable: path.unreachable.is_empty(),
            path_weights_nonvanishing: path.holds(),
            stabilizable: check_stabilizable(
                a,
                self.system.input_node(),
                self.system.input_variance(),
                DEFAULT_RANK_TOL,
            ),
            detectable_single_sensors,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NoiseSpec {
    Iso { iso: f64 },
    Matrix(Vec<Vec<f64>>),
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n: usize,
    A: Vec<Vec<f64>>,
    input_node: usize,
    sigma_w2: f64,
    V: NoiseSpec,
    h: Vec<u64>,
    H: u64,
    f: Vec<u64>,
    F: u64,
    #[serde(default)]
    metadata: Metadata,
}

impl InstanceFile {
    fn from_instance(inst: &ProblemInstance) -> Self {
        let sys = &inst.system;
        let n = sys.n();
        let v = match sys.noise() {
            SensorNoise::Zero => NoiseSpec::Iso { iso: 0.0 },
            SensorNoise::Covariance(v) => {
                let s = v[(0, 0)];
                if *v == DMatrix::identity(n, n) * s {
                    NoiseSpec::Iso { iso: s }
                } else {
                    NoiseSpec::Matrix(linalg::to_rows(v))
                }
            }
        };
        Self {
            n,
            A: linalg::to_rows(sys.a()),
            input_node: sys.input_node(),
            sigma_w2: sys.input_variance(),
            V: v,
            h: inst.costs.placement_costs.clone(),
            H: inst.costs.placement_budget,
            f: inst.costs.attack_costs.clone(),
            F: inst.costs.attack_budget,
            metadata: inst.metadata.clone(),
        }
    }

    fn into_instance(self) -> Result<ProblemInstance> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Validation("field `n`: must be positive".into()));
        }
        if self.A.len() != n || self.A.iter().any(|r| r.len() != n) {
            return Err(Error::Validation(format!("field `A`: expected {n}x{n} matrix")));
        }
        let a = linalg::from_rows(&self.A).expect("rectangular");
        if self.input_node >= n {
            return Err(Error::Validation(format!(
                "field `input_node`: {} is out of range for {n} nodes",
                self.input_node
            )));
        }
        for (name, v) in [("h", &self.h), ("f", &self.f)] {
            if v.len() != n {
                return Err(Error::Validation(format!(
                    "field `{name}`: expected {n} entries, found {}",
                    v.len()
                )));
            }
        }
        let noise = match self.V {
            NoiseSpec::Iso { iso } => {
                if !(iso >= 0.0 && iso.is_finite()) {
                    return Err(Error::Validation(format!(
                        "field `V`: isotropic variance must be nonnegative, got {iso}"
                    )));
                }
                SensorNoise::isotropic(n, iso)
            }
            NoiseSpec::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Validation(format!("field `V`: expected {n}x{n} matrix")));
                }
                SensorNoise::Covariance(linalg::from_rows(&rows).expect("rectangular"))
            }
        };
        let system = NetworkSystem::new(a, self.input_node, self.sigma_w2, noise)
            .map_err(|e| Error::Validation(format!("system: {e}")))?;
        let costs = CostModel::new(self.h, self.H, self.f, self.F)?;
        ProblemInstance::new(system, costs, self.metadata)
    }
}

pub fn to_json(inst: &ProblemInstance) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(text)
        .map_err(|e| Error::Validation(format!("{e}")))?;
    file.into_instance()
}

pub fn save_instance(inst: &ProblemInstance, path: &Path) -> Result<()> {
    fs::write(path, to_json(inst)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path)?;
    from_json(&text).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Cost and budget ranges for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostRanges {
    pub cost_max: u64,
    pub budget_max: Option<u64>,
}

impl Default for CostRanges {
    fn default() -> Self {
        Self {
            cost_max: 10,
            budget_max: None,
        }
    }
}

/// Costs in `[1, cost_max]`, `H` in `[min h, sum h]`, `F` in `[0, sum f]`,
/// both budgets clipped to `budget_max`.
fn random_costs(rng: &mut ChaCha8Rng, n: usize, ranges: CostRanges) -> CostModel {
    let cost_max = ranges.cost_max.max(1);
    let h: Vec<u64> = (0..n).map(|_| rng.random_range(1..=cost_max)).collect();
    let f: Vec<u64> = (0..n).map(|_| rng.random_range(1..=cost_max)).collect();
    let cap = ranges.budget_max.unwrap_or(u64::MAX);
    let h_hi = h.iter().sum::<u64>().min(cap);
    let h_lo = h.iter().copied().min().unwrap_or(0).min(h_hi);
    let f_hi = f.iter().sum::<u64>().min(cap);
    CostModel {
        placement_budget: rng.random_range(h_lo..=h_hi),
        attack_budget: rng.random_range(0..=f_hi),
        placement_costs: h,
        attack_costs: f,
    }
}

/// Edge set of a random strongly connected digraph as `(from, to)` pairs: a
/// random Hamiltonian cycle plus `extra` further distinct edges drawn
/// uniformly from the remaining pairs.
fn cycle_plus_random_edges(
    rng: &mut ChaCha8Rng,
    n: usize,
    extra: usize,
    allow_self_loops: bool,
) -> Vec<(usize, usize)> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut present = vec![false; n * n];
    let mut edges = Vec::with_capacity(n + extra);
    if n > 1 {
        for k in 0..n {
            let (u, v) = (perm[k], perm[(k + 1) % n]);
            present[u * n + v] = true;
            edges.push((u, v));
        }
    }
    let mut free: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| !present[u * n + v] && (allow_self_loops || u != v))
        .collect();
    free.shuffle(rng);
    edges.extend(free.into_iter().take(extra));
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowStochasticConfig {
    pub n: usize,
    pub extra_edges: usize,
    pub self_loops: bool,
    pub costs: CostRanges,
}

impl RowStochasticConfig {
    pub fn new(n: usize, extra_edges: usize) -> Self {
        Self {
            n,
            extra_edges,
            self_loops: true,
            costs: CostRanges::default(),
        }
    }
}

/// Random row-stochastic irreducible system: positive weights on a strongly
/// connected edge set, normalised per row. Such systems satisfy the
/// detectability and path-weight assumptions.
pub fn generate_row_stochastic(cfg: &RowStochasticConfig, seed: u64) -> Result<ProblemInstance> {
    let n = cfg.n;
    if n < 2 {
        return Err(Error::Argument("row-stochastic instances need n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(n, n);
    for (from, to) in cycle_plus_random_edges(&mut rng, n, cfg.extra_edges, false) {
        a[(to, from)] = rng.random_range(0.1..1.0);
    }
    if cfg.self_loops {
        for i in 0..n {
            a[(i, i)] = rng.random_range(0.1..1.0);
        }
    }
    for i in 0..n {
        let s: f64 = a.row(i).iter().sum();
        for j in 0..n {
            a[(i, j)] /= s;
        }
    }
    let g = graph_from_matrix(&a, DEFAULT_ZERO_TOL)?;
    if !is_strongly_connected(&g) {
        return Err(Error::Generation("generated graph is not strongly connected".into()));
    }
    let input = rng.random_range(0..n);
    let costs = random_costs(&mut rng, n, cfg.costs);
    let system = NetworkSystem::new(a, input, 1.0, SensorNoise::Zero)?;
    ProblemInstance::new(
        system,
        costs,
        Metadata {
            name: Some(format!("row-stochastic-n{n}-s{seed}")),
            seed: Some(seed),
            generator: Some("row_stochastic".into()),
            rejections: None,
        },
    )
}

pub fn generate_row_stochastic_instance(
    n: usize,
    extra_edges: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    generate_row_stochastic(&RowStochasticConfig::new(n, extra_edges), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalConfig {
    pub n: usize,
    /// Nonzero entries of `A`, self-loops included.
    pub edge_count: usize,
    pub sigma_w2: f64,
    pub sigma_v2: f64,
    pub input_node: usize,
    pub costs: CostRanges,
    pub max_rejections: u64,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            n: 10,
            edge_count: 15,
            sigma_w2: 0.1,
            sigma_v2: 0.0,
            input_node: 0,
            costs: CostRanges::default(),
            max_rejections: 1000,
        }
    }
}

/// Strongly connected graph with standard-normal weights, resampled until the
/// detectability, stabilizability and path-weight checks all pass.
pub fn generate_normal(cfg: &NormalConfig, seed: u64) -> Result<ProblemInstance> {
    let n = cfg.n;
    if n < 2 {
        return Err(Error::Argument("normal instances need n >= 2".into()));
    }
    if cfg.edge_count < n || cfg.edge_count > n * n {
        return Err(Error::Argument(format!(
            "edge count must lie in [{n}, {}], got {}",
            n * n,
            cfg.edge_count
        )));
    }
    if cfg.input_node >= n {
        return Err(Error::Index {
            index: cfg.input_node,
            len: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections = 0u64;
    loop {
        let mut a = DMatrix::zeros(n, n);
        for (from, to) in cycle_plus_random_edges(&mut rng, n, cfg.edge_count - n, true) {
            let w: f64 = rng.sample(StandardNormal);
            a[(to, from)] = w;
        }
        let costs = random_costs(&mut rng, n, cfg.costs);
        let system = NetworkSystem::new(
            a,
            cfg.input_node,
            cfg.sigma_w2,
            SensorNoise::isotropic(n, cfg.sigma_v2),
        )?;
        let candidate = ProblemInstance::new(system, costs, Metadata::default())?;
        if candidate.check_assumptions()?.holds() {
            return ProblemInstance::new(
                candidate.system,
                candidate.costs,
                Metadata {
                    name: Some(format!("normal-n{n}-e{}-s{seed}", cfg.edge_count)),
                    seed: Some(seed),
                    generator: Some("normal".into()),
                    rejections: Some(rejections),
                },
            );
        }
        rejections += 1;
        if rejections >= cfg.max_rejections {
            return Err(Error::Generation(format!(
                "{rejections} consecutive samples failed the structural checks"
            )));
        }
    }
}

pub fn generate_normal_instance(
    n: usize,
    edge_count: usize,
    sigma_w2: f64,
    sigma_v2: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    generate_normal(
        &NormalConfig {
            n,
            edge_count,
            sigma_w2,
            sigma_v2,
            ..NormalConfig::default()
        },
        seed,
    )
}
