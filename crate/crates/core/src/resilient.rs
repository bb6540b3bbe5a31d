//! Resilient placement: the designer places sensors knowing an attacker
//! will then remove a budget-feasible subset of them.
//!
//! The solver walks outward from the input one distance layer at a time and,
//! at each radius, packs sensors into the placement budget so as to maximise
//! the total attack cost the adversary would need to wipe them all out. The
//! first radius at which that cost exceeds the attack budget is optimal.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::DistanceMap;
use crate::kalman::{impulse_gramian, DareOptions, IndicatorVector, NetworkSystem, SensorNoise};
use crate::solvers::{evaluate_zero_noise, solve_gkfsa, CostModel, SolveReport, Zeta};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnapsackInstance {
    pub values: Vec<u64>,
    pub sizes: Vec<u64>,
    pub capacity: u64,
}

impl KnapsackInstance {
    pub fn new(values: Vec<u64>, sizes: Vec<u64>, capacity: u64) -> Result<Self> {
        if values.len() != sizes.len() {
            return Err(Error::Shape(format!(
                "{} values but {} sizes",
                values.len(),
                sizes.len()
            )));
        }
        Ok(Self {
            values,
            sizes,
            capacity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnapsackSolution {
    pub indicator: Vec<bool>,
    pub value: u64,
    pub used: u64,
}

/// Exact 0/1 knapsack by dynamic programming over capacities `0..=K`.
///
/// Backtracking keeps an item only when taking it is strictly better than
/// leaving it out, so among optimal packings the one that excludes
/// higher-index items is returned.
pub fn knapsack_dp(inst: &KnapsackInstance) -> KnapsackSolution {
    let items = inst.values.len();
    let cap = usize::try_from(inst.capacity).expect("capacity fits in memory");
    let width = cap + 1;
    let mut best = vec![0u64; width];
    let mut take = vec![false; items * width];
    for i in 0..items {
        let (value, size) = (inst.values[i], inst.sizes[i]);
        let Ok(size) = usize::try_from(size) else {
            continue;
        };
        if size > cap || value == 0 {
            continue;
        }
        let row = &mut take[i * width..(i + 1) * width];
        for c in (size..=cap).rev() {
            let with = best[c - size] + value;
            if with > best[c] {
                best[c] = with;
                row[c] = true;
            }
        }
    }
    let mut indicator = vec![false; items];
    let mut c = cap;
    for i in (0..items).rev() {
        if take[i * width + c] {
            indicator[i] = true;
            c -= inst.sizes[i] as usize;
        }
    }
    let value = indicator
        .iter()
        .zip(&inst.values)
        .filter(|(&b, _)| b)
        .map(|(_, &v)| v)
        .sum();
    let used = indicator
        .iter()
        .zip(&inst.sizes)
        .filter(|(&b, _)| b)
        .map(|(_, &s)| s)
        .sum();
    KnapsackSolution {
        indicator,
        value,
        used,
    }
}

/// Feasible: within the placement budget, and no budget-feasible attack
/// removes every sensor (i.e. the total attack cost exceeds the budget).
pub fn is_feasible_placement(mu: &IndicatorVector, costs: &CostModel) -> bool {
    !mu.support_is_empty()
        && costs.placement_cost(mu) <= costs.placement_budget
        && costs.attack_cost(mu) > costs.attack_budget
}

pub fn solve_rgkfsp(
    sys: &NetworkSystem,
    costs: &CostModel,
    dmap: &DistanceMap,
    opts: &DareOptions,
) -> Result<SolveReport> {
    let n = sys.n();
    if costs.len() != n {
        return Err(Error::Shape(format!(
            "cost vectors have length {}, system has {n} nodes",
            costs.len()
        )));
    }
    // relabelled order: input first, then nondecreasing distance, ties by index
    let order = dmap.order_by_distance();
    let mut prefix_end = 0;
    for m in 0..=dmap.max_distance() {
        while prefix_end < order.len() && dmap.get(order[prefix_end]).finite() == Some(m) {
            prefix_end += 1;
        }
        let prefix = &order[..prefix_end];
        let inst = KnapsackInstance {
            values: prefix.iter().map(|&j| costs.attack_costs[j]).collect(),
            sizes: prefix.iter().map(|&j| costs.placement_costs[j]).collect(),
            capacity: costs.placement_budget,
        };
        let sol = knapsack_dp(&inst);
        if sol.value > costs.attack_budget {
            let support: Vec<usize> = prefix
                .iter()
                .zip(&sol.indicator)
                .filter(|(_, &b)| b)
                .map(|(&j, _)| j)
                .collect();
            let mu = IndicatorVector::from_support(n, &support)?;
            let attack = solve_gkfsa(sys, costs, &mu, dmap, opts)?;
            return Ok(SolveReport {
                spent: costs.placement_cost(&mu),
                chosen: mu,
                attack: Some(attack.chosen),
                objective: attack.objective,
                objective_posteriori: attack.objective_posteriori,
                zeta: attack.zeta,
            });
        }
    }
    let mu = IndicatorVector::zeros(n);
    let (objective, objective_posteriori) = evaluate_zero_noise(sys, &mu, dmap, opts)?;
    Ok(SolveReport {
        attack: Some(mu.clone()),
        chosen: mu,
        objective,
        objective_posteriori,
        zeta: Zeta::Unbounded,
        spent: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubsetSumInstance {
    pub sizes: Vec<u64>,
    pub target: u64,
}

impl SubsetSumInstance {
    pub fn new(sizes: Vec<u64>, target: u64) -> Result<Self> {
        if target == 0 {
            return Err(Error::Argument("subset-sum target must be positive".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Argument("subset-sum sizes must be positive".into()));
        }
        Ok(Self { sizes, target })
    }

    /// Number of bits in the binary representation of the target.
    pub fn target_bits(&self) -> usize {
        (u64::BITS - self.target.leading_zeros()) as usize
    }
}

/// Path system encoding a subset-sum instance: one node per item followed by
/// one node per bit of the target, input at the first node.
pub fn build_reduction_instance(ss: &SubsetSumInstance) -> Result<(NetworkSystem, CostModel)> {
    let items = ss.sizes.len();
    let bits = ss.target_bits();
    let n = items + bits;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 1.0 / 3.0;
        if i + 1 < n {
            a[(i, i + 1)] = 1.0 / 3.0;
            a[(i + 1, i)] = 1.0 / 3.0;
        }
    }
    a[(0, 0)] = 2.0 / 3.0;
    a[(n - 1, n - 1)] = 2.0 / 3.0;
    if n == 1 {
        a[(0, 0)] = 1.0;
    }
    let sys = NetworkSystem::new(a, 0, 1.0, SensorNoise::Zero)?;
    let mut h = ss.sizes.clone();
    h.extend((0..bits).map(|b| 1u64 << b));
    let costs = CostModel::new(h.clone(), ss.target, h, ss.target - 1)?;
    Ok((sys, costs))
}

/// `trace(sum_{i=0}^{|U|-1} A^i B B^T (A^T)^i)`: a subset summing to the
/// target exists iff the optimal resilient objective is at most this.
pub fn reduction_threshold(sys: &NetworkSystem, ss: &SubsetSumInstance) -> f64 {
    impulse_gramian(sys, ss.sizes.len().checked_sub(1)).trace()
}
