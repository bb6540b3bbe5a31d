//! Monte Carlo comparison of the zero-noise algorithms against brute-force
//! optima when the sensors are in fact noisy.
//!
//! Each realization draws one random graph; every sensor-noise level in the
//! sweep is applied to that same graph. Per row we record the noisy optimum
//! (OPT), the noisy value of the zero-noise algorithm's decision (ALG) and the
//! trace of the Lyapunov correction `E` that bounds their difference.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{bfs_distances, graph_from_matrix, DEFAULT_ZERO_TOL};
use crate::instance::{generate_normal, CostRanges, NormalConfig};
use crate::kalman::{dare_solve, IndicatorVector, NetworkSystem, SensorNoise, Trace};
use crate::noise::compute_noise_bound;
use crate::oracle::{brute_gkfsa, brute_gkfsp, brute_rgkfsp, OracleConfig};
use crate::resilient::solve_rgkfsp;
use crate::solvers::{solve_gkfsa, solve_gkfsp};

pub const CSV_HEADER: [&str; 7] = ["seed", "problem", "sigma_v2", "opt", "alg", "bound", "subopt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Gkfsp,
    Gkfsa,
    Rgkfsp,
}

impl Problem {
    pub const ALL: [Problem; 3] = [Problem::Gkfsp, Problem::Gkfsa, Problem::Rgkfsp];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Gkfsp => "gkfsp",
            Problem::Gkfsa => "gkfsa",
            Problem::Rgkfsp => "rgkfsp",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gkfsp" | "place" => Ok(Problem::Gkfsp),
            "gkfsa" | "attack" => Ok(Problem::Gkfsa),
            "rgkfsp" | "resilient" => Ok(Problem::Rgkfsp),
            other => Err(Error::Argument(format!("unknown problem `{other}`"))),
        }
    }
}

/// Parses either a comma-separated list (`0.01,0.1,0.5`) or an inclusive
/// linear range `start:stop:count`.
pub fn parse_sigma_spec(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Argument(format!("invalid sigma_v2 spec `{spec}`"));
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        match count {
            0 => return Err(bad()),
            1 => vec![start],
            _ => (0..count)
                .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub realizations: usize,
    pub sigma_v2: Vec<f64>,
    pub seed: u64,
    pub graph: NormalConfig,
    /// Sensors attacked in the GKFSA experiment; `None` means every node.
    pub attack_placement: Option<IndicatorVector>,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Gkfsp,
            realizations: 100,
            sigma_v2: vec![0.01, 0.1, 0.5],
            seed: 0,
            graph: NormalConfig {
                costs: CostRanges {
                    cost_max: 10,
                    budget_max: None,
                },
                ..NormalConfig::default()
            },
            attack_placement: None,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub seed: u64,
    pub problem: Problem,
    pub sigma_v2: f64,
    pub opt: f64,
    pub alg: f64,
    /// `+inf` when the zero-noise gain does not stabilise `A - KC`.
    pub bound: f64,
    /// Relative suboptimality `|ALG - OPT| / OPT`.
    pub subopt: f64,
}

impl ExperimentRow {
    /// Distance of ALG from OPT in the problem's own direction.
    pub fn gap(&self) -> f64 {
        let g = match self.problem {
            Problem::Gkfsa => self.opt - self.alg,
            _ => self.alg - self.opt,
        };
        if g.is_nan() {
            0.0
        } else {
            g
        }
    }

    pub fn bound_holds(&self, tol: f64) -> bool {
        self.gap() <= self.bound + tol
    }
}

fn value(t: Trace) -> f64 {
    t.value()
}

fn noisy_value(sys: &NetworkSystem, mu: &IndicatorVector, cfg: &OracleConfig) -> Result<f64> {
    Ok(value(cfg.objective.of(&dare_solve(sys, mu, &cfg.dare)?)))
}

/// Trace of `E` (or of the a posteriori excess for the a posteriori
/// objective) for the sensors in `survivors`. With no sensors the filter ignores the
/// measurements and there is nothing to bound.
fn correction_trace(
    sys: &NetworkSystem,
    survivors: &IndicatorVector,
    cfg: &OracleConfig,
) -> Result<f64> {
    if survivors.support_is_empty() {
        return Ok(0.0);
    }
    match compute_noise_bound(sys, survivors, &cfg.dare) {
        Ok(r) => Ok(match cfg.objective {
            crate::oracle::Objective::Priori => r.trace_e,
            crate::oracle::Objective::Posteriori => r.trace_e_post,
        }),
        Err(Error::Unstable { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn relative(gap: f64, opt: f64) -> f64 {
    if gap == 0.0 || gap.is_nan() {
        0.0
    } else {
        gap.abs() / opt.abs()
    }
}

/// All rows for one realization (one graph, every noise level).
pub fn run_realization(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ExperimentRow>> {
    let inst = generate_normal(&cfg.graph, seed)?;
    let base = inst.system.without_noise();
    let costs = &inst.costs;
    let n = base.n();
    let g = graph_from_matrix(base.a(), DEFAULT_ZERO_TOL)?;
    let dmap = bfs_distances(&g, base.input_node())?;
    let attack_placement = cfg
        .attack_placement
        .clone()
        .unwrap_or_else(|| IndicatorVector::ones(n));

    // zero-noise decisions do not depend on the noise level
    let decision = match cfg.problem {
        Problem::Gkfsp => solve_gkfsp(&base, costs, &dmap)?,
        Problem::Gkfsa => solve_gkfsa(&base, costs, &attack_placement, &dmap, &cfg.oracle.dare)?,
        Problem::Rgkfsp => solve_rgkfsp(&base, costs, &dmap, &cfg.oracle.dare)?,
    };

    let mut rows = Vec::with_capacity(cfg.sigma_v2.len());
    for &s in &cfg.sigma_v2 {
        let sys = base.with_noise(SensorNoise::isotropic(n, s))?;
        let (opt, alg, bound) = match cfg.problem {
            Problem::Gkfsp => {
                let opt = brute_gkfsp(&sys, costs, &cfg.oracle)?.objective.value();
                let alg = noisy_value(&sys, &decision.chosen, &cfg.oracle)?;
                let bound = correction_trace(&sys, &decision.chosen, &cfg.oracle)?;
                (opt, alg, bound)
            }
            Problem::Gkfsa => {
                let best = brute_gkfsa(&sys, costs, &attack_placement, &cfg.oracle)?;
                let alg = noisy_value(&sys, &attack_placement.without(&decision.chosen), &cfg.oracle)?;
                let bound =
                    correction_trace(&sys, &attack_placement.without(&best.best), &cfg.oracle)?;
                (best.objective.value(), alg, bound)
            }
            Problem::Rgkfsp => {
                let opt = brute_rgkfsp(&sys, costs, &cfg.oracle)?.objective.value();
                let worst = brute_gkfsa(&sys, costs, &decision.chosen, &cfg.oracle)?;
                let bound =
                    correction_trace(&sys, &decision.chosen.without(&worst.best), &cfg.oracle)?;
                (opt, worst.objective.value(), bound)
            }
        };
        let mut row = ExperimentRow {
            seed,
            problem: cfg.problem,
            sigma_v2: s,
            opt,
            alg,
            bound,
            subopt: 0.0,
        };
        row.subopt = relative(row.gap(), opt);
        rows.push(row);
    }
    Ok(rows)
}

/// Realization `r` uses seed `cfg.seed + r`. Rows come back in realization
/// order regardless of how the work was scheduled.
pub fn gap_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let cap = match cfg.problem {
        Problem::Rgkfsp => cfg.oracle.resilient_cap,
        _ => cfg.oracle.cap,
    };
    if cfg.graph.n > cap {
        return Err(Error::Size {
            size: cfg.graph.n,
            cap,
        });
    }
    let per_seed: Vec<Vec<ExperimentRow>> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| run_realization(cfg, cfg.seed.wrapping_add(r)))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub rows: usize,
    pub bound_violations: usize,
    pub unbounded_rows: usize,
    pub max_subopt: f64,
    pub mean_subopt: f64,
    /// Median of `bound / gap` over rows with a positive gap.
    pub median_bound_ratio: Option<f64>,
}

pub fn summarize(rows: &[ExperimentRow], tol: f64) -> ExperimentSummary {
    let mut ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.gap() > 0.0 && r.bound.is_finite())
        .map(|r| r.bound / r.gap())
        .collect();
    ratios.sort_by(f64::total_cmp);
    let finite_subopt: Vec<f64> = rows.iter().map(|r| r.subopt).filter(|s| s.is_finite()).collect();
    ExperimentSummary {
        rows: rows.len(),
        bound_violations: rows.iter().filter(|r| !r.bound_holds(tol)).count(),
        unbounded_rows: rows.iter().filter(|r| r.bound.is_infinite()).count(),
        max_subopt: finite_subopt.iter().copied().fold(0.0, f64::max),
        mean_subopt: if finite_subopt.is_empty() {
            0.0
        } else {
            finite_subopt.iter().sum::<f64>() / finite_subopt.len() as f64
        },
        median_bound_ratio: (!ratios.is_empty()).then(|| ratios[ratios.len() / 2]),
    }
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
