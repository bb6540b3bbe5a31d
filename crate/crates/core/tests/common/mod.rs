#![allow(dead_code)]

use kfsp_core::graph::DEFAULT_ZERO_TOL;
use kfsp_core::instance::{generate_row_stochastic, CostRanges, RowStochasticConfig};
use kfsp_core::{bfs_distances, graph_from_matrix, DistanceMap, NetworkSystem, ProblemInstance};

pub fn dmap(sys: &NetworkSystem) -> DistanceMap {
    let g = graph_from_matrix(sys.a(), DEFAULT_ZERO_TOL).unwrap();
    bfs_distances(&g, sys.input_node()).unwrap()
}

/// Row-stochastic instance with `n` nodes, a few extra edges, costs in
/// `[1, cost_max]` and budgets at most `budget_max`.
pub fn stochastic(n: usize, seed: u64, cost_max: u64, budget_max: u64) -> ProblemInstance {
    let cfg = RowStochasticConfig {
        costs: CostRanges {
            cost_max,
            budget_max: Some(budget_max),
        },
        ..RowStochasticConfig::new(n, (seed as usize) % (n + 1))
    };
    generate_row_stochastic(&cfg, seed).unwrap()
}
