//! Brute-force ground truth for small instances. Every candidate is scored
//! with the Riccati fixed-point iteration, never with the closed form.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{
    bfs_distances, check_distance_assumption, graph_from_matrix, DistanceMap, DEFAULT_ZERO_TOL,
};
use crate::kalman::{
    closed_form_covariance, dare_solve, CovariancePair, DareOptions, IndicatorVector,
    NetworkSystem, Trace,
};
use crate::linalg::max_abs_diff;
use crate::solvers::CostModel;

pub const DEFAULT_CAP: usize = 14;
pub const DEFAULT_RESILIENT_CAP: usize = 10;
/// Tolerance for the Riccati-vs-closed-form check run on every evaluation.
pub const CROSS_CHECK_TOL: f64 = 1e-6;
/// Objectives within this distance of the optimum are reported as ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Priori,
    Posteriori,
}

impl Objective {
    pub fn of(self, cov: &CovariancePair) -> Trace {
        match self {
            Objective::Priori => cov.trace_priori(),
            Objective::Posteriori => cov.trace_posteriori(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub cap: usize,
    pub resilient_cap: usize,
    pub cross_check: bool,
    pub objective: Objective,
    pub dare: DareOptions,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            resilient_cap: DEFAULT_RESILIENT_CAP,
            cross_check: true,
            objective: Objective::Priori,
            dare: DareOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// First optimum in enumeration order.
    pub best: IndicatorVector,
    /// Every indicator whose objective ties the optimum.
    pub optimal: Vec<IndicatorVector>,
    pub objective: Trace,
    /// Worst-case attack against `best` (resilient placement only).
    pub worst_attack: Option<IndicatorVector>,
    pub evaluated_count: usize,
}

/// Scores sensor sets (as bit masks) by Riccati iteration, optionally
/// checking each zero-noise result against the closed form.
struct Evaluator<'a> {
    sys: &'a NetworkSystem,
    cfg: &'a OracleConfig,
    dmap: Option<DistanceMap>,
}

impl<'a> Evaluator<'a> {
    fn new(sys: &'a NetworkSystem, cfg: &'a OracleConfig) -> Result<Self> {
        let dmap = if cfg.cross_check && sys.noise().is_zero() {
            let g = graph_from_matrix(sys.a(), DEFAULT_ZERO_TOL)?;
            let d = bfs_distances(&g, sys.input_node())?;
            check_distance_assumption(sys.a(), &d, DEFAULT_ZERO_TOL)
                .holds()
                .then_some(d)
        } else {
            None
        };
        Ok(Self { sys, cfg, dmap })
    }

    fn score(&self, mask: u64) -> Result<Trace> {
        let mu = IndicatorVector::from_mask(self.sys.n(), mask);
        let cov = dare_solve(self.sys, &mu, &self.cfg.dare)?;
        if let (Some(dmap), CovariancePair::Finite { priori, posteriori }) = (&self.dmap, &cov) {
            if !mu.support_is_empty() {
                let closed = closed_form_covariance(self.sys, &mu, dmap)?;
                let gap = max_abs_diff(priori, closed.priori().expect("finite"))
                    .max(max_abs_diff(posteriori, closed.posteriori().expect("finite")));
                if gap >= CROSS_CHECK_TOL {
                    return Err(Error::Mismatch(format!(
                        "riccati and closed-form covariances differ by {gap:e} at placement {mu}"
                    )));
                }
            }
        }
        Ok(self.cfg.objective.of(&cov))
    }

    /// Scores every mask in parallel; the result is indexed like `masks`.
    fn score_all(&self, masks: &[u64]) -> Result<Vec<Trace>> {
        masks.par_iter().map(|&m| self.score(m)).collect()
    }
}

/// `sums[mask] = sum of costs[j] over bits j of mask`, built incrementally.
fn subset_sums(costs: &[u64]) -> Vec<u64> {
    let n = costs.len();
    let mut sums = vec![0u64; 1 << n];
    for mask in 1..(1u64 << n) {
        let low = mask.trailing_zeros() as usize;
        sums[mask as usize] = sums[(mask & (mask - 1)) as usize] + costs[low];
    }
    sums
}

fn check_cap(size: usize, cap: usize) -> Result<()> {
    if size > cap || size >= 63 {
        return Err(Error::Size { size, cap });
    }
    Ok(())
}

fn collect_best<F>(candidates: &[u64], scores: &[Trace], n: usize, better: F) -> OracleResult
where
    F: Fn(Trace, Trace) -> bool,
{
    let mut best_idx = 0;
    for i in 1..candidates.len() {
        if better(scores[i], scores[best_idx]) {
            best_idx = i;
        }
    }
    let objective = scores[best_idx];
    let optimal = candidates
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s.approx_eq(objective, TIE_TOL * objective.value().abs().max(1.0)))
        .map(|(&m, _)| IndicatorVector::from_mask(n, m))
        .collect();
    OracleResult {
        best: IndicatorVector::from_mask(n, candidates[best_idx]),
        optimal,
        objective,
        worst_attack: None,
        evaluated_count: candidates.len(),
    }
}

/// Minimum objective over all nonempty placements within the placement budget.
pub fn brute_gkfsp(
    sys: &NetworkSystem,
    costs: &CostModel,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    let n = sys.n();
    check_cap(n, cfg.cap)?;
    check_costs(costs, n)?;
    let h = subset_sums(&costs.placement_costs);
    let candidates: Vec<u64> = (1..(1u64 << n))
        .filter(|&m| h[m as usize] <= costs.placement_budget)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Infeasible(
            "no sensor placement fits the placement budget".into(),
        ));
    }
    let scores = Evaluator::new(sys, cfg)?.score_all(&candidates)?;
    Ok(collect_best(&candidates, &scores, n, |a, b| a < b))
}

/// Maximum objective over all attacks on `placement` within the attack budget.
pub fn brute_gkfsa(
    sys: &NetworkSystem,
    costs: &CostModel,
    placement: &IndicatorVector,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    let n = sys.n();
    check_costs(costs, n)?;
    if placement.len() != n {
        return Err(Error::Shape("placement length mismatch".into()));
    }
    let support = placement.support();
    check_cap(support.len(), cfg.cap)?;
    let support_f: Vec<u64> = support.iter().map(|&j| costs.attack_costs[j]).collect();
    let f = subset_sums(&support_f);
    let mu_mask = placement.mask();
    let attacks: Vec<u64> = (0..(1u64 << support.len()))
        .filter(|&s| f[s as usize] <= costs.attack_budget)
        .map(|s| {
            support
                .iter()
                .enumerate()
                .filter(|(k, _)| s >> k & 1 == 1)
                .fold(0u64, |m, (_, &j)| m | 1 << j)
        })
        .collect();
    let survivors: Vec<u64> = attacks.iter().map(|&nu| mu_mask & !nu).collect();
    let scores = Evaluator::new(sys, cfg)?.score_all(&survivors)?;
    Ok(collect_best(&attacks, &scores, n, |a, b| a > b))
}

/// Min over budget-feasible placements of the max over budget-feasible
/// attacks.
pub fn brute_rgkfsp(
    sys: &NetworkSystem,
    costs: &CostModel,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    let n = sys.n();
    check_cap(n, cfg.resilient_cap)?;
    check_costs(costs, n)?;
    let h = subset_sums(&costs.placement_costs);
    let f = subset_sums(&costs.attack_costs);
    let all: Vec<u64> = (0..(1u64 << n)).collect();
    let table = Evaluator::new(sys, cfg)?.score_all(&all)?;

    let mut best: Option<(u64, u64, Trace)> = None;
    let mut placements = Vec::new();
    let mut worst_values = Vec::new();
    let mut evaluated = 0;
    for mu in 0..(1u64 << n) {
        if h[mu as usize] > costs.placement_budget {
            continue;
        }
        // enumerate attacks nu as submasks of mu, starting from the empty attack
        let mut worst = (0u64, table[mu as usize]);
        evaluated += 1;
        let mut nu = mu;
        while nu != 0 {
            if f[nu as usize] <= costs.attack_budget {
                evaluated += 1;
                let value = table[(mu & !nu) as usize];
                if value > worst.1 || (value == worst.1 && nu < worst.0) {
                    worst = (nu, value);
                }
            }
            nu = (nu - 1) & mu;
        }
        placements.push(mu);
        worst_values.push(worst.1);
        if best.is_none_or(|(_, _, v)| worst.1 < v) {
            best = Some((mu, worst.0, worst.1));
        }
    }
    let (mu, nu, objective) = best.expect("the empty placement is always budget-feasible");
    let optimal = placements
        .iter()
        .zip(&worst_values)
        .filter(|(_, &v)| v.approx_eq(objective, TIE_TOL * objective.value().abs().max(1.0)))
        .map(|(&m, _)| IndicatorVector::from_mask(n, m))
        .collect();
    Ok(OracleResult {
        best: IndicatorVector::from_mask(n, mu),
        optimal,
        objective,
        worst_attack: Some(IndicatorVector::from_mask(n, nu)),
        evaluated_count: evaluated,
    })
}

/// Whether some subset of `sizes` sums exactly to `target`.
pub fn brute_subset_sum(sizes: &[u64], target: u64) -> bool {
    subset_sums(sizes).contains(&target)
}

fn check_costs(costs: &CostModel, n: usize) -> Result<()> {
    if costs.len() != n {
        return Err(Error::Shape(format!(
            "cost vectors have length {}, system has {n} nodes",
            costs.len()
        )));
    }
    Ok(())
}
