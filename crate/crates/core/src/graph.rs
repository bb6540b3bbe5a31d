//! Directed-graph view of a dynamics matrix.
//!
//! Node `x_j` has an edge to `x_i` whenever `A[i][j]` is structurally nonzero,
//! i.e. the state of `x_j` feeds into the next state of `x_i`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    node_count: usize,
    adjacency: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Builds a graph from explicit out-neighbour lists.
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let node_count = adjacency.len();
        if node_count == 0 {
            return Err(Error::Shape("graph must have at least one node".into()));
        }
        for out in &adjacency {
            if let Some(&bad) = out.iter().find(|&&v| v >= node_count) {
                return Err(Error::Index {
                    index: bad,
                    len: node_count,
                });
            }
        }
        let adjacency = adjacency
            .into_iter()
            .map(|mut out| {
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        Ok(Self {
            node_count,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn out_neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from].binary_search(&to).is_ok()
    }

    /// 0/1 matrix with `M[i][j] = 1` iff there is an edge `j -> i`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.node_count, self.node_count);
        for (j, out) in self.adjacency.iter().enumerate() {
            for &i in out {
                m[(i, j)] = 1.0;
            }
        }
        m
    }

    fn reversed(&self) -> Self {
        let mut rev = vec![Vec::new(); self.node_count];
        for (u, out) in self.adjacency.iter().enumerate() {
            for &v in out {
                rev[v].push(u);
            }
        }
        Self {
            node_count: self.node_count,
            adjacency: rev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Finite(usize),
    Unreachable,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unreachable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    source: usize,
    dist: Vec<Distance>,
}

impl DistanceMap {
    pub fn source(&self) -> usize {
        self.source
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn get(&self, node: usize) -> Distance {
        self.dist[node]
    }

    pub fn distances(&self) -> &[Distance] {
        &self.dist
    }

    /// Largest finite distance (`l_max`).
    pub fn max_distance(&self) -> usize {
        self.dist.iter().filter_map(|d| d.finite()).max().unwrap_or(0)
    }

    pub fn all_reachable(&self) -> bool {
        self.dist.iter().all(|d| *d != Distance::Unreachable)
    }

    /// Nodes ordered by nondecreasing distance, ties by index. Unreachable
    /// nodes are omitted.
    pub fn order_by_distance(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = (0..self.dist.len())
            .filter(|&j| self.dist[j].finite().is_some())
            .collect();
        nodes.sort_by_key(|&j| (self.dist[j].finite().unwrap_or(usize::MAX), j));
        nodes
    }
}

/// Edge `j -> i` iff `|A[i][j]| > zero_tol`.
pub fn graph_from_matrix(a: &DMatrix<f64>, zero_tol: f64) -> Result<DirectedGraph> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "dynamics matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let adjacency = (0..n)
        .map(|j| (0..n).filter(|&i| a[(i, j)].abs() > zero_tol).collect())
        .collect();
    DirectedGraph::from_adjacency(adjacency)
}

pub fn bfs_distances(g: &DirectedGraph, source: usize) -> Result<DistanceMap> {
    if source >= g.node_count {
        return Err(Error::Index {
            index: source,
            len: g.node_count,
        });
    }
    let mut dist = vec![Distance::Unreachable; g.node_count];
    dist[source] = Distance::Finite(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].finite().expect("queued nodes are reached");
        for &v in &g.adjacency[u] {
            if dist[v] == Distance::Unreachable {
                dist[v] = Distance::Finite(du + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(DistanceMap { source, dist })
}

/// One forward and one reverse BFS from node 0.
pub fn is_strongly_connected(g: &DirectedGraph) -> bool {
    let forward = bfs_distances(g, 0).expect("node 0 exists");
    if !forward.all_reachable() {
        return false;
    }
    bfs_distances(&g.reversed(), 0)
        .expect("node 0 exists")
        .all_reachable()
}

/// Outcome of the path-weight assumption check: every node must be reachable
/// from the input, and `(A^m)[j][source] != 0` whenever `dist[j] = m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DistanceAssumptionReport {
    pub unreachable: Vec<usize>,
    pub vanishing: Vec<usize>,
}

impl DistanceAssumptionReport {
    pub fn holds(&self) -> bool {
        self.unreachable.is_empty() && self.vanishing.is_empty()
    }
}

pub fn check_distance_assumption(
    a: &DMatrix<f64>,
    dmap: &DistanceMap,
    zero_tol: f64,
) -> DistanceAssumptionReport {
    let n = dmap.len();
    let mut report = DistanceAssumptionReport::default();
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); dmap.max_distance() + 1];
    for j in 0..n {
        match dmap.get(j) {
            Distance::Finite(m) => layers[m].push(j),
            Distance::Unreachable => report.unreachable.push(j),
        }
    }
    // column `source` of A^m, advanced one power at a time
    let mut col = crate::linalg::basis_vector(n, dmap.source());
    for (m, layer) in layers.iter().enumerate() {
        if m > 0 {
            col = a * &col;
        }
        for &j in layer {
            if col[j].abs() <= zero_tol {
                report.vanishing.push(j);
            }
        }
    }
    report.vanishing.sort_unstable();
    report
}
