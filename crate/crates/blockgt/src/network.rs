//! Agent communication topology and mixing-matrix construction.
//!
//! A [`NetworkGraph`] is an undirected connected graph over `m` agents. A
//! [`MixingMatrix`] is a doubly stochastic weight matrix `W` built on that
//! graph together with its measured contraction factor `rho`: the largest
//! singular value of `W - (1/m)11^T`. One multiplication by `W` pulls any
//! state matrix toward its row-mean by at least that factor, which is what
//! every consensus argument downstream leans on.

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative-change tolerance for the spectral-gap power iteration.
const POWER_TOL: f64 = 1e-10;
/// Iteration cap for the power iteration.
const POWER_CAP: usize = 10_000;
/// Doubly-stochastic construction tolerance on row/column sums.
const STOCHASTIC_TOL: f64 = 1e-12;

/// Built-in topology families plus explicit edge lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Ring,
    Complete,
    EdgeList,
}

/// Undirected connected agent topology. Edges are stored once as `(lo, hi)`
/// pairs; self-loops are excluded (self-weights live in the mixing matrix).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    num_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl NetworkGraph {
    /// Cycle over `m` agents: agent `i` talks to `i±1 mod m`.
    pub fn ring(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "graph needs at least 2 agents, got {m}"
            )));
        }
        let edges = (0..m).map(|i| normalize(i, (i + 1) % m)).collect();
        Ok(Self {
            num_agents: m,
            edges,
        })
    }

    /// All-pairs topology.
    pub fn complete(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "graph needs at least 2 agents, got {m}"
            )));
        }
        let mut edges = BTreeSet::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.insert((i, j));
            }
        }
        Ok(Self {
            num_agents: m,
            edges,
        })
    }

    /// Build from an explicit pair list. Rejects self-loops, out-of-range
    /// endpoints, and disconnected results. A single agent with no edges is
    /// accepted as the degenerate network.
    pub fn from_edges(m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("graph needs at least 1 agent".into()));
        }
        let mut edges = BTreeSet::new();
        for &(i, j) in pairs {
            if i == j {
                return Err(Error::Topology(format!("self-loop at agent {i}")));
            }
            if i >= m || j >= m {
                return Err(Error::Topology(format!(
                    "edge ({i}, {j}) out of range for {m} agents"
                )));
            }
            edges.insert(normalize(i, j));
        }
        let graph = Self {
            num_agents: m,
            edges,
        };
        if !graph.is_connected() {
            return Err(Error::Topology(format!(
                "edge list does not connect all {m} agents"
            )));
        }
        Ok(graph)
    }

    /// Parse an edge-list file: one `i j` pair per line, 0-indexed. Blank
    /// lines and `#` comments are ignored.
    pub fn from_edge_list_file(path: &Path, m: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.display().to_string();
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let parse = |tok: Option<&str>, idx: usize| -> Result<usize> {
                let tok = tok.ok_or_else(|| Error::Parse {
                    path: name.clone(),
                    line: idx + 1,
                    msg: "expected two agent indices".into(),
                })?;
                tok.parse::<usize>().map_err(|_| Error::Parse {
                    path: name.clone(),
                    line: idx + 1,
                    msg: format!("not an agent index: {tok:?}"),
                })
            };
            let i = parse(tokens.next(), idx)?;
            let j = parse(tokens.next(), idx)?;
            if tokens.next().is_some() {
                return Err(Error::Parse {
                    path: name,
                    line: idx + 1,
                    msg: "trailing tokens after edge pair".into(),
                });
            }
            pairs.push((i, j));
        }
        Self::from_edges(m, &pairs)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&normalize(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Breadth-first reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.num_agents
    }

    fn is_regular(&self) -> bool {
        let d = self.degree(0);
        (1..self.num_agents).all(|i| self.degree(i) == d)
    }
}

fn normalize(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Dispatch on [`GraphKind`].
pub fn build_graph(kind: GraphKind, m: usize, edges: Option<&[(usize, usize)]>) -> Result<NetworkGraph> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "graph needs at least 2 agents, got {m}"
        )));
    }
    match kind {
        GraphKind::Ring => NetworkGraph::ring(m),
        GraphKind::Complete => NetworkGraph::complete(m),
        GraphKind::EdgeList => {
            let pairs = edges.ok_or_else(|| {
                Error::InvalidArgument("edge-list graph kind requires an edge list".into())
            })?;
            NetworkGraph::from_edges(m, pairs)
        }
    }
}

/// Weight-assignment rules for the mixing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// `W[i][j] = 1 / (1 + max(deg_i, deg_j))` on edges, remainder on the
    /// diagonal. Doubly stochastic with positive diagonal on any connected
    /// undirected graph.
    Metropolis,
    /// `W = I/2 + A/2` where `A` averages uniformly over closed
    /// neighborhoods. Only doubly stochastic on regular graphs.
    LazyUniform,
}

/// Doubly stochastic mixing weights with measured contraction factor.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    rho: f64,
}

impl MixingMatrix {
    /// Validate an explicit weight matrix against a graph and measure its
    /// contraction factor. All mixing-matrix invariants are enforced here:
    /// row and column sums within `1e-12` of one, positive diagonal, zeros
    /// off the edge set, and `rho < 1`.
    pub fn from_weights(graph: &NetworkGraph, weights: DMatrix<f64>) -> Result<Self> {
        let m = graph.num_agents();
        if weights.nrows() != m || weights.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "weight matrix is {}x{}, graph has {m} agents",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..m {
            let row_sum: f64 = weights.row(i).sum();
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvariantViolation(format!(
                    "row {i} sums to {row_sum}, expected 1"
                )));
            }
            let col_sum: f64 = weights.column(i).sum();
            if (col_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvariantViolation(format!(
                    "column {i} sums to {col_sum}, expected 1"
                )));
            }
            if weights[(i, i)] <= 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "diagonal entry {i} is {}, expected > 0",
                    weights[(i, i)]
                )));
            }
            for j in 0..m {
                if i != j && !graph.has_edge(i, j) && weights[(i, j)] != 0.0 {
                    return Err(Error::InvariantViolation(format!(
                        "nonzero weight {} on non-edge ({i}, {j})",
                        weights[(i, j)]
                    )));
                }
            }
        }
        let rho = spectral_gap(&weights)?;
        if rho >= 1.0 {
            return Err(Error::InvariantViolation(format!(
                "contraction factor rho = {rho} >= 1; weights do not mix"
            )));
        }
        Ok(Self { weights, rho })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Measured largest singular value of `W - (1/m)11^T`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn num_agents(&self) -> usize {
        self.weights.nrows()
    }
}

/// Build the mixing matrix for a graph under the given rule.
pub fn build_mixing_matrix(graph: &NetworkGraph, rule: WeightRule) -> Result<MixingMatrix> {
    let m = graph.num_agents();
    let mut w = DMatrix::<f64>::zeros(m, m);
    match rule {
        WeightRule::Metropolis => {
            for (i, j) in graph.edges() {
                let weight = 1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64);
                w[(i, j)] = weight;
                w[(j, i)] = weight;
            }
            for i in 0..m {
                let off: f64 = w.row(i).sum();
                w[(i, i)] = 1.0 - off;
            }
        }
        WeightRule::LazyUniform => {
            if !graph.is_regular() {
                return Err(Error::RuleInapplicable(
                    "lazy-uniform weights require a regular graph".into(),
                ));
            }
            let share = 0.5 / (graph.degree(0) as f64 + 1.0);
            for i in 0..m {
                w[(i, i)] = 0.5 + share;
                for j in graph.neighbors(i) {
                    w[(i, j)] = share;
                }
            }
        }
    }
    MixingMatrix::from_weights(graph, w)
}

/// Largest singular value of `W - (1/m)11^T`, by power iteration on the
/// deflated matrix. Converges when the estimate changes by less than `1e-10`
/// relative; errors out past 10_000 steps with the last estimate attached.
pub fn spectral_gap(weights: &DMatrix<f64>) -> Result<f64> {
    let m = weights.nrows();
    let deflated = weights - DMatrix::from_element(m, m, 1.0 / m as f64);
    // Fixed stream: the measurement must be reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157_ab1e);
    let mut v = nalgebra::DVector::<f64>::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    v /= norm;

    let mut estimate = 0.0_f64;
    for step in 0..POWER_CAP {
        let mv = &deflated * &v;
        let sigma = mv.norm(); // Rayleigh estimate of the top singular value
        if sigma < 1e-15 {
            return Ok(0.0);
        }
        let mut next = deflated.transpose() * mv;
        let next_norm = next.norm();
        if next_norm < 1e-300 {
            return Ok(0.0);
        }
        next /= next_norm;
        let delta = (sigma - estimate).abs();
        estimate = sigma;
        v = next;
        // Minimum sweep count: the estimate can plateau briefly before the
        // iterate settles into the top singular subspace.
        if step >= 32 && delta <= POWER_TOL * estimate.max(1e-15) {
            return Ok(estimate);
        }
    }
    Err(Error::PowerIterationStalled {
        steps: POWER_CAP,
        estimate,
    })
}
