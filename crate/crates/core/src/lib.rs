//! Sensor placement, sensor attack and resilient sensor placement for Kalman
//! filtering on networked linear systems driven by a single stochastic input.
//!
//! With noiseless sensors the steady-state error covariance depends only on
//! the graph distance from the input node to the nearest sensor, which turns
//! placement and attack into shortest-path problems and resilient placement
//! into a sequence of knapsack problems. Brute-force oracles and noisy-sensor
//! suboptimality bounds are included for verification.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod graph;
pub mod instance;
pub mod kalman;
pub mod linalg;
pub mod noise;
pub mod oracle;
pub mod resilient;
pub mod solvers;

pub use error::{Error, Result};
pub use graph::{
    bfs_distances, check_distance_assumption, graph_from_matrix, is_strongly_connected,
    DirectedGraph, Distance, DistanceAssumptionReport, DistanceMap,
};
pub use instance::{load_instance, save_instance, ProblemInstance};
pub use kalman::{
    check_detectable, check_stabilizable, closed_form_covariance, dare_solve, CovariancePair,
    DareOptions, IndicatorVector, NetworkSystem, SensorNoise, Trace,
};
pub use linalg::pseudo_inverse;
pub use noise::{compute_noise_bound, NoiseBoundReport};
pub use oracle::{brute_gkfsa, brute_gkfsp, brute_rgkfsp, OracleConfig, OracleResult};
pub use resilient::{
    build_reduction_instance, is_feasible_placement, knapsack_dp, solve_rgkfsp,
    KnapsackInstance, KnapsackSolution, SubsetSumInstance,
};
pub use solvers::{solve_gkfsa, solve_gkfsp, CostModel, SolveReport, Zeta};
