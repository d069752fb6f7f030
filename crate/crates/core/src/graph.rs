//! Communication topologies: doubly stochastic mixing matrices, their
//! validation, and consensus-error utilities.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};

/// Tolerance on row and column sums for double stochasticity.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Resample budget for [`erdos_renyi`].
pub const MAX_RESAMPLES: usize = 1000;

/// A weighted communication digraph. Entry `a_ij > 0` means agent `i`
/// receives from agent `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
    in_neighbors: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedDigraph {
    /// Wrap a square weight matrix. Only shape and finiteness are checked
    /// here; use [`validate`] for the communication assumptions.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() || weights.nrows() == 0 {
            return Err(Error::InvalidInput("weight matrix must be square and non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("weight matrix has non-finite entries".into()));
        }
        let n = weights.nrows();
        let in_neighbors =
            (0..n).map(|i| (0..n).filter(|&j| weights[(i, j)] != 0.0).map(|j| (j, weights[(i, j)])).collect()).collect();
        Ok(Self { weights, in_neighbors })
    }

    /// The one-agent network `A = [1]`.
    pub fn singleton() -> Self {
        Self::from_weights(DMatrix::from_element(1, 1, 1.0)).expect("1x1 identity is valid")
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `(j, a_ij)` for every agent `j` that agent `i` receives from,
    /// including the self-loop.
    pub fn in_neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.in_neighbors[i]
    }

    /// Directed edges `(j, i)` with `a_ij > 0`, `j ≠ i`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.in_neighbors.iter().enumerate() {
            for &(j, w) in row {
                if j != i && w > 0.0 {
                    out.push((j, i));
                }
            }
        }
        out
    }

    /// Apply `A ⊗ I_d` to a stacked vector of `N` blocks of length `d`,
    /// touching only in-neighbor entries.
    pub fn mix(&self, v: &DVector<f64>, d: usize) -> DVector<f64> {
        debug_assert_eq!(v.len(), d * self.n_agents());
        let mut out = DVector::zeros(v.len());
        for (i, row) in self.in_neighbors.iter().enumerate() {
            for &(j, a) in row {
                for c in 0..d {
                    out[i * d + c] += a * v[j * d + c];
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.n_agents();
        let file = GraphFile {
            n,
            weights: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.weights[(i, j)]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        if file.weights.len() != file.n * file.n {
            return Err(Error::Dimension {
                what: "graph weights (row-major N×N)",
                expected: file.n * file.n,
                got: file.weights.len(),
            });
        }
        Self::from_weights(DMatrix::from_row_slice(file.n, file.n, &file.weights))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub doubly_stochastic: bool,
    pub strongly_connected: bool,
    /// `‖A − J‖₂` with `J = 𝟙𝟙ᵀ/N`.
    pub rho_a: f64,
    /// `‖A − I‖₂`.
    pub norm_a_minus_i: f64,
}

impl GraphReport {
    /// All communication assumptions hold.
    pub fn is_valid(&self) -> bool {
        self.doubly_stochastic && self.strongly_connected && self.rho_a < 1.0
    }
}

/// Check double stochasticity, strong connectivity and compute the two
/// operator norms used by the convergence theory.
pub fn validate(g: &WeightedDigraph) -> GraphReport {
    let a = g.weights();
    let n = g.n_agents();
    let nonneg = a.iter().all(|&w| w >= 0.0);
    let rows_ok = a.row_iter().all(|r| (r.sum() - 1.0).abs() <= STOCHASTIC_TOL);
    let cols_ok = a.column_iter().all(|c| (c.sum() - 1.0).abs() <= STOCHASTIC_TOL);

    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    GraphReport {
        doubly_stochastic: nonneg && rows_ok && cols_ok,
        strongly_connected: strongly_connected(g),
        rho_a: linalg::spectral_norm(&(a - &j)),
        norm_a_minus_i: linalg::spectral_norm(&(a - DMatrix::identity(n, n))),
    }
}

fn strongly_connected(g: &WeightedDigraph) -> bool {
    let n = g.n_agents();
    let mut dg = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| dg.add_node(())).collect();
    for (from, to) in g.edges() {
        dg.add_edge(nodes[from], nodes[to], ());
    }
    kosaraju_scc(&dg).len() == 1
}

/// Metropolis–Hastings weights for an undirected 0/1 adjacency matrix:
/// `a_ij = 1/(1 + max(deg_i, deg_j))` on edges, the remainder on the
/// diagonal. Diagonal entries of the input are ignored.
pub fn metropolis_weights(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !adjacency.is_square() {
        return Err(Error::InvalidInput("adjacency must be square".into()));
    }
    let n = adjacency.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = adjacency[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidInput(format!("adjacency entry ({i},{j}) = {v} is not 0/1")));
            }
            if v != adjacency[(j, i)] {
                return Err(Error::InvalidInput("adjacency must be symmetric".into()));
            }
        }
    }
    let degree: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| j != i && adjacency[(i, j)] == 1.0).count()).collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && adjacency[(i, j)] == 1.0 {
                w[(i, j)] = 1.0 / (1.0 + degree[i].max(degree[j]) as f64);
            }
        }
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(w)
}

fn undirected_connected(adj: &DMatrix<f64>) -> bool {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if adj[(i, j)] == 1.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Sample an undirected Erdős–Rényi graph, resampling until connected, and
/// weight it with [`metropolis_weights`] (self-loops included).
pub fn erdos_renyi(n_agents: usize, edge_prob: f64, seed: u64) -> Result<WeightedDigraph> {
    if n_agents < 2 {
        return Err(Error::InvalidInput("Erdős–Rényi generation needs at least 2 agents".into()));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::InvalidInput(format!("edge probability {edge_prob} outside (0, 1]")));
    }
    for attempt in 0..MAX_RESAMPLES {
        let mut rng = rng::stream(seed, Purpose::Graph, 0, attempt as u64);
        let mut adj = DMatrix::zeros(n_agents, n_agents);
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                if rng.random::<f64>() < edge_prob {
                    adj[(i, j)] = 1.0;
                    adj[(j, i)] = 1.0;
                }
            }
        }
        if undirected_connected(&adj) {
            return WeightedDigraph::from_weights(metropolis_weights(&adj)?);
        }
    }
    Err(Error::DisconnectedGraph { attempts: MAX_RESAMPLES, edge_prob })
}

/// `‖v − (J ⊗ I_d) v‖` for a stacked vector of `n_agents` equal blocks.
pub fn consensus_gap(v: &[f64], n_agents: usize) -> Result<f64> {
    if n_agents == 0 || !v.len().is_multiple_of(n_agents) {
        return Err(Error::InvalidInput(format!("vector of length {} does not split into {n_agents} blocks", v.len())));
    }
    let d = v.len() / n_agents;
    let mut mean = vec![0.0; d];
    for block in v.chunks(d.max(1)) {
        for (m, x) in mean.iter_mut().zip(block) {
            *m += x / n_agents as f64;
        }
    }
    if d == 0 {
        return Ok(0.0);
    }
    Ok(v.chunks(d).flat_map(|block| block.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m))).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    }

    #[test]
    fn metropolis_path_graph() {
        let w = metropolis_weights(&path3()).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0],
        );
        assert_relative_eq!(w, expected, epsilon = 1e-15);
    }

    #[test]
    fn metropolis_small_cases() {
        let k2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_relative_eq!(metropolis_weights(&k2).unwrap(), DMatrix::from_element(2, 2, 0.5));
        let single = DMatrix::zeros(1, 1);
        assert_eq!(metropolis_weights(&single).unwrap(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn metropolis_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(metropolis_weights(&a).is_err());
    }

    #[test]
    fn validate_path_graph() {
        let g = WeightedDigraph::from_weights(metropolis_weights(&path3()).unwrap()).unwrap();
        let r = validate(&g);
        assert!(r.doubly_stochastic && r.strongly_connected);
        assert_relative_eq!(r.rho_a, 2.0 / 3.0, epsilon = 1e-10);
        // A − I is symmetric with eigenvalues {0, −1/3, −1}
        assert_relative_eq!(r.norm_a_minus_i, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn validate_identity_and_average() {
        let id = WeightedDigraph::from_weights(DMatrix::identity(2, 2)).unwrap();
        assert!(!validate(&id).strongly_connected);
        let avg = WeightedDigraph::from_weights(DMatrix::from_element(2, 2, 0.5)).unwrap();
        let r = validate(&avg);
        assert!(r.is_valid());
        assert!(r.rho_a.abs() < 1e-12);
    }

    #[test]
    fn erdos_renyi_examples() {
        let g = erdos_renyi(2, 1.0, 99).unwrap();
        assert_relative_eq!(g.weights().clone(), DMatrix::from_element(2, 2, 0.5));
        let g5 = erdos_renyi(5, 0.6, 42).unwrap();
        assert!(validate(&g5).is_valid());
        assert_eq!(erdos_renyi(5, 0.6, 42).unwrap(), g5);
        assert!(matches!(erdos_renyi(3, 1e-9, 1), Err(Error::DisconnectedGraph { .. })));
    }

    #[test]
    fn consensus_gap_examples() {
        assert_eq!(consensus_gap(&[3.0, 3.0], 2).unwrap(), 0.0);
        assert_relative_eq!(consensus_gap(&[1.0, 3.0], 2).unwrap(), 2f64.sqrt());
        assert!(consensus_gap(&[1.5, -2.0, 1.5, -2.0, 1.5, -2.0], 3).unwrap() < 1e-15);
        assert!(consensus_gap(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = erdos_renyi(4, 0.7, 3).unwrap();
        let back = WeightedDigraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
        assert!(WeightedDigraph::from_json(r#"{"n": 2, "weights": [1.0]}"#).is_err());
    }
}
