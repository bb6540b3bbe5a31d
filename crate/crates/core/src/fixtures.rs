//! The four-node reference system: a bidirectional path with self-loops on
//! the end nodes and the stochastic input on the second node.

use nalgebra::DMatrix;

use crate::kalman::{NetworkSystem, SensorNoise};

pub fn example1_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.5, 2.1, 0.0, 0.0, //
            0.3, 0.0, 1.5, 0.0, //
            0.0, 0.6, 0.0, 0.5, //
            0.0, 0.0, -0.8, 1.0,
        ],
    )
}

pub fn example1_system() -> NetworkSystem {
    NetworkSystem::new(example1_matrix(), 1, 1.0, SensorNoise::Zero)
        .expect("reference system is valid")
}

/// The reference instance file shipped in `fixtures/example1.json`.
pub const EXAMPLE1_JSON: &str = include_str!("../fixtures/example1.json");
