//! Optimal single-sensor placement and optimal layer-by-layer attack under
//! zero sensor noise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::DistanceMap;
use crate::kalman::{
    closed_form_covariance, dare_solve, zeta, DareOptions, IndicatorVector, NetworkSystem, Trace,
};

/// Integer placement/attack costs and budgets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostModel {
    pub placement_costs: Vec<u64>,
    pub placement_budget: u64,
    pub attack_costs: Vec<u64>,
    pub attack_budget: u64,
}

impl CostModel {
    pub fn new(
        placement_costs: Vec<u64>,
        placement_budget: u64,
        attack_costs: Vec<u64>,
        attack_budget: u64,
    ) -> Result<Self> {
        if placement_costs.len() != attack_costs.len() {
            return Err(Error::Shape(format!(
                "placement costs have length {}, attack costs {}",
                placement_costs.len(),
                attack_costs.len()
            )));
        }
        Ok(Self {
            placement_costs,
            placement_budget,
            attack_costs,
            attack_budget,
        })
    }

    /// Same cost for every node.
    pub fn uniform(n: usize, cost: u64, placement_budget: u64, attack_budget: u64) -> Self {
        Self {
            placement_costs: vec![cost; n],
            placement_budget,
            attack_costs: vec![cost; n],
            attack_budget,
        }
    }

    pub fn len(&self) -> usize {
        self.placement_costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placement_costs.is_empty()
    }

    pub fn placement_cost(&self, mu: &IndicatorVector) -> u64 {
        mu.cost(&self.placement_costs)
    }

    pub fn attack_cost(&self, nu: &IndicatorVector) -> u64 {
        nu.cost(&self.attack_costs)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Shape(format!(
                "cost vectors have length {}, system has {n} nodes",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Distance from the input to the nearest (surviving) sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Zeta {
    Finite(usize),
    Unbounded,
}

impl std::fmt::Display for Zeta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Zeta::Finite(z) => write!(f, "{z}"),
            Zeta::Unbounded => f.write_str("inf"),
        }
    }
}

impl From<Option<usize>> for Zeta {
    fn from(z: Option<usize>) -> Self {
        z.map_or(Zeta::Unbounded, Zeta::Finite)
    }
}

impl Serialize for Zeta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Zeta::Finite(z) => s.serialize_u64(*z as u64),
            Zeta::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    /// The decision: a placement for GKFSP/RGKFSP, an attack for GKFSA.
    pub chosen: IndicatorVector,
    /// Worst-case attack against `chosen` (resilient placement only).
    pub attack: Option<IndicatorVector>,
    pub objective: Trace,
    pub objective_posteriori: Trace,
    pub zeta: Zeta,
    pub spent: u64,
}

/// Zero-noise objective of the sensors in `survivors`: closed form when a
/// reachable sensor exists, otherwise the sensorless limit (finite only for
/// stable `A`).
pub fn evaluate_zero_noise(
    sys: &NetworkSystem,
    survivors: &IndicatorVector,
    dmap: &DistanceMap,
    opts: &DareOptions,
) -> Result<(Trace, Trace)> {
    let cov = if zeta(survivors, dmap).is_some() {
        closed_form_covariance(&sys.without_noise(), survivors, dmap)?
    } else {
        dare_solve(&sys.without_noise(), survivors, opts)?
    };
    Ok((cov.trace_priori(), cov.trace_posteriori()))
}

fn check_inputs(sys: &NetworkSystem, costs: &CostModel, dmap: &DistanceMap) -> Result<()> {
    costs.check_len(sys.n())?;
    if dmap.len() != sys.n() || dmap.source() != sys.input_node() {
        return Err(Error::Argument(
            "distance map must come from the system's input node".into(),
        ));
    }
    if !sys.noise().is_zero() {
        return Err(Error::Argument(
            "graph-based solvers assume zero sensor noise".into(),
        ));
    }
    Ok(())
}

/// A single sensor at the affordable node closest to the input; ties go to
/// the lowest index.
pub fn solve_gkfsp(
    sys: &NetworkSystem,
    costs: &CostModel,
    dmap: &DistanceMap,
) -> Result<SolveReport> {
    check_inputs(sys, costs, dmap)?;
    let best = (0..sys.n())
        .filter(|&j| costs.placement_costs[j] <= costs.placement_budget)
        .filter_map(|j| dmap.get(j).finite().map(|d| (d, j)))
        .min()
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no reachable node has placement cost within budget {}",
                costs.placement_budget
            ))
        })?;
    let (dist, node) = best;
    let chosen = IndicatorVector::from_support(sys.n(), &[node])?;
    let cov = closed_form_covariance(sys, &chosen, dmap)?;
    Ok(SolveReport {
        spent: costs.placement_costs[node],
        chosen,
        attack: None,
        objective: cov.trace_priori(),
        objective_posteriori: cov.trace_posteriori(),
        zeta: Zeta::Finite(dist),
    })
}

/// Greedy layer removal: sensors are grouped by distance from the input;
/// each layer is removed whole while its total attack cost fits the
/// remaining budget. Sensors at unreachable nodes form a final layer.
pub fn solve_gkfsa(
    sys: &NetworkSystem,
    costs: &CostModel,
    placement: &IndicatorVector,
    dmap: &DistanceMap,
    opts: &DareOptions,
) -> Result<SolveReport> {
    check_inputs(sys, costs, dmap)?;
    if placement.len() != sys.n() {
        return Err(Error::Shape("placement length mismatch".into()));
    }
    if placement.support_is_empty() {
        return Err(Error::Argument("placement has no sensors to attack".into()));
    }
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); dmap.max_distance() + 2];
    let unreachable_layer = layers.len() - 1;
    for j in placement.support() {
        let layer = dmap.get(j).finite().unwrap_or(unreachable_layer);
        layers[layer].push(j);
    }

    let mut attack = IndicatorVector::zeros(sys.n());
    let mut remaining = costs.attack_budget;
    for layer in layers.iter().filter(|l| !l.is_empty()) {
        let cost: u64 = layer.iter().map(|&j| costs.attack_costs[j]).sum();
        if cost > remaining {
            break;
        }
        remaining -= cost;
        for &j in layer {
            attack.set(j, true);
        }
    }

    let survivors = placement.without(&attack);
    let (objective, objective_posteriori) = evaluate_zero_noise(sys, &survivors, dmap, opts)?;
    Ok(SolveReport {
        spent: costs.attack_cost(&attack),
        zeta: zeta(&survivors, dmap).into(),
        chosen: attack,
        attack: None,
        objective,
        objective_posteriori,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example1_system;
    use crate::graph::{bfs_distances, graph_from_matrix, DEFAULT_ZERO_TOL};

    fn dmap() -> DistanceMap {
        let sys = example1_system();
        let g = graph_from_matrix(sys.a(), DEFAULT_ZERO_TOL).unwrap();
        bfs_distances(&g, 1).unwrap()
    }

    #[test]
    fn gkfsp_picks_input_node_when_affordable() {
        let sys = example1_system();
        let costs = CostModel::uniform(4, 1, 1, 0);
        let r = solve_gkfsp(&sys, &costs, &dmap()).unwrap();
        assert_eq!(r.chosen.support(), vec![1]);
        assert_eq!(r.objective, Trace::Finite(1.0));
        assert_eq!(r.objective_posteriori, Trace::Finite(0.0));
        assert_eq!(r.zeta, Zeta::Finite(0));
        assert_eq!(r.spent, 1);
    }

    #[test]
    fn gkfsp_tie_break_lowest_index() {
        let sys = example1_system();
        let costs = CostModel::new(vec![1, 5, 1, 1], 1, vec![1; 4], 0).unwrap();
        let r = solve_gkfsp(&sys, &costs, &dmap()).unwrap();
        assert_eq!(r.chosen.support(), vec![0]);
        assert_eq!(r.zeta, Zeta::Finite(1));
        // 1 + 2.1^2 + 0.6^2
        assert!(r.objective.approx_eq(Trace::Finite(5.77), 1e-12));
    }

    #[test]
    fn gkfsp_infeasible_when_nothing_affordable() {
        let sys = example1_system();
        let costs = CostModel::uniform(4, 3, 2, 0);
        assert!(matches!(
            solve_gkfsp(&sys, &costs, &dmap()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn gkfsa_removes_two_layers() {
        let sys = example1_system();
        let costs = CostModel::uniform(4, 1, 4, 2);
        let mu = IndicatorVector::parse("1101").unwrap();
        let r = solve_gkfsa(&sys, &costs, &mu, &dmap(), &DareOptions::default()).unwrap();
        assert_eq!(r.chosen.to_string(), "1100");
        assert_eq!(r.zeta, Zeta::Finite(2));
        assert!(r.objective.approx_eq(Trace::Finite(9.4438), 1e-9));
        assert_eq!(r.spent, 2);
    }

    #[test]
    fn gkfsa_zero_budget_is_empty_attack() {
        let sys = example1_system();
        let costs = CostModel::uniform(4, 1, 4, 0);
        let mu = IndicatorVector::parse("1101").unwrap();
        let r = solve_gkfsa(&sys, &costs, &mu, &dmap(), &DareOptions::default()).unwrap();
        assert!(r.chosen.support_is_empty());
        assert_eq!(r.objective, Trace::Finite(1.0));
    }

    #[test]
    fn gkfsa_removing_everything_on_unstable_system_is_infinite() {
        let sys = example1_system();
        let costs = CostModel::uniform(4, 1, 4, 10);
        let mu = IndicatorVector::parse("1101").unwrap();
        let r = solve_gkfsa(&sys, &costs, &mu, &dmap(), &DareOptions::default()).unwrap();
        assert_eq!(r.chosen, mu);
        assert_eq!(r.zeta, Zeta::Unbounded);
        assert_eq!(r.objective, Trace::Infinite);
    }

    #[test]
    fn gkfsa_stops_at_unaffordable_layer() {
        let sys = example1_system();
        // layer {x2} costs 1, layer {x1, x3} costs 4 > remaining 2
        let costs = CostModel::new(vec![1; 4], 4, vec![2, 1, 2, 1], 3).unwrap();
        let mu = IndicatorVector::parse("1111").unwrap();
        let r = solve_gkfsa(&sys, &costs, &mu, &dmap(), &DareOptions::default()).unwrap();
        assert_eq!(r.chosen.to_string(), "0100");
        assert_eq!(r.zeta, Zeta::Finite(1));
    }
}
