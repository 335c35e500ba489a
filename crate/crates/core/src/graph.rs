//! Communication topologies, Metropolis-Hastings mixing matrices, and the
//! spectral constants that govern how fast repeated averaging contracts
//! toward the network mean.
//!
//! A [`WeightMatrix`] `W` built here is symmetric and doubly stochastic, so
//! `‖W^m − (1/n)·11ᵀ‖ ≤ c·ρ^m` with `c = 1` and `ρ` its second-largest
//! singular value. Those two constants feed the consensus step schedule.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance for the doubly stochastic row/column-sum checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("edge endpoint {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("graph is disconnected: node {unreached} cannot be reached from node 0")]
    Disconnected { unreached: usize },
    #[error("edge list line {line}: {reason}")]
    ParseEdgeList { line: usize, reason: String },
    #[error("matrix is not a valid mixing matrix: {0}")]
    InvalidWeights(String),
    #[error("no spectral gap (rho = {rho}): weight matrix does not contract to the average")]
    NoSpectralGap { rho: f64 },
}

/// Undirected connected graph on nodes `0..n` with no self-loops.
///
/// Edges are stored normalized as `(min, max)` pairs; the adjacency lists are
/// kept sorted so every traversal is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    fn from_parts(n: usize, edges: BTreeSet<(usize, usize)>) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let topo = Topology { n, edges, adjacency };
        topo.check_connected()?;
        Ok(topo)
    }

    /// Breadth-first search from node 0; errors with the smallest unreached node.
    fn check_connected(&self) -> Result<(), GraphError> {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            None => Ok(()),
            Some(unreached) => Err(GraphError::Disconnected { unreached }),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as normalized `(i, j)` pairs with `i < j`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }
}

/// Cycle graph on `n ≥ 3` nodes; every node has degree 2.
pub fn build_ring(n: usize) -> Result<Topology, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidTopology(format!(
            "a ring needs at least 3 nodes, got {n}"
        )));
    }
    let edges: BTreeSet<_> = (0..n).map(|i| normalize_edge(i, (i + 1) % n)).collect();
    Topology::from_parts(n, edges)
}

/// Complete graph on `n ≥ 2` nodes.
pub fn build_complete(n: usize) -> Result<Topology, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidTopology(format!(
            "a complete graph needs at least 2 nodes, got {n}"
        )));
    }
    let edges: BTreeSet<_> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    Topology::from_parts(n, edges)
}

/// Builds a topology from an explicit edge list.
///
/// Symmetric duplicates are collapsed; the graph must be connected and all
/// endpoints must lie in `0..n`.
pub fn build_from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Topology, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidTopology(format!(
            "need at least 2 nodes, got {n}"
        )));
    }
    let mut set = BTreeSet::new();
    for &(a, b) in edges {
        for node in [a, b] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange { node, n });
            }
        }
        if a == b {
            return Err(GraphError::InvalidTopology(format!("self-loop at node {a}")));
        }
        set.insert(normalize_edge(a, b));
    }
    Topology::from_parts(n, set)
}

fn normalize_edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Parses the edge-list text format: one `i j` pair per line, 0-indexed and
/// whitespace-separated; `#` starts a comment; blank lines are ignored.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let parse = |field: Option<&str>| -> Result<usize, GraphError> {
            field
                .ok_or_else(|| GraphError::ParseEdgeList {
                    line,
                    reason: "expected two node indices".into(),
                })?
                .parse()
                .map_err(|_| GraphError::ParseEdgeList {
                    line,
                    reason: format!("invalid node index in {content:?}"),
                })
        };
        let a = parse(fields.next())?;
        let b = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(GraphError::ParseEdgeList {
                line,
                reason: format!("trailing fields in {content:?}"),
            });
        }
        edges.push((a, b));
    }
    Ok(edges)
}

/// Renders a topology in the edge-list text format accepted by
/// [`parse_edge_list`].
pub fn format_edge_list(topology: &Topology) -> String {
    let mut out = String::new();
    for (a, b) in topology.edges() {
        out.push_str(&format!("{a} {b}\n"));
    }
    out
}

/// Symmetric doubly stochastic mixing matrix together with its contraction
/// constants: `‖W^m − (1/n)11ᵀ‖ ≤ c·ρ^m` for all `m ≥ 1`.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    rho: f64,
    c: f64,
}

impl WeightMatrix {
    /// Validates an externally supplied matrix (symmetry and unit row/column
    /// sums within [`STOCHASTIC_TOL`]) and computes its spectral constants.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self, GraphError> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(GraphError::InvalidWeights(format!(
                "expected a nonempty square matrix, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if (w[(i, j)] - w[(j, i)]).abs() > STOCHASTIC_TOL {
                    return Err(GraphError::InvalidWeights(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        for i in 0..n {
            let row: f64 = w.row(i).iter().sum();
            let col: f64 = w.column(i).iter().sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(GraphError::InvalidWeights(format!(
                    "row/column {i} sums to ({row}, {col}), expected 1"
                )));
            }
        }
        let (rho, c) = spectral_constants(&w)?;
        Ok(WeightMatrix { w, rho, c })
    }

    /// Exact one-shot averaging: every entry is `1/n`.
    ///
    /// Its deviation from the averaging projector is exactly zero, so `rho`
    /// is floored at machine epsilon to keep schedule formulas finite.
    pub fn uniform_averaging(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        WeightMatrix {
            w: DMatrix::from_element(n, n, 1.0 / n as f64),
            rho: f64::EPSILON,
            c: 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Spectral contraction factor in `(0, 1)`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Contraction prefactor; 1 for the symmetric matrices built here.
    pub fn prefactor(&self) -> f64 {
        self.c
    }
}

/// Metropolis-Hastings weights for a connected topology:
/// `W[i][j] = 1/(1 + max(deg i, deg j))` on edges, remaining mass on the
/// diagonal. Symmetric and doubly stochastic by construction, with a strictly
/// positive diagonal.
pub fn metropolis_hastings_weights(topology: &Topology) -> Result<WeightMatrix, GraphError> {
    let n = topology.node_count();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for (i, j) in topology.edges() {
        let weight = 1.0 / (1.0 + topology.degree(i).max(topology.degree(j)) as f64);
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    for i in 0..n {
        let off_diagonal: f64 = w.row(i).iter().sum();
        w[(i, i)] = 1.0 - off_diagonal;
    }
    let (rho, c) = spectral_constants(&w)?;
    Ok(WeightMatrix { w, rho, c })
}

/// Contraction constants of a symmetric doubly stochastic matrix.
///
/// `rho` is the largest absolute eigenvalue of `W − (1/n)·11ᵀ`, floored at
/// machine epsilon; `c = 1` is tight because the spectral norm of a symmetric
/// matrix equals its largest absolute eigenvalue. Fails when `rho` does not
/// lie strictly below 1 (disconnected or periodic mixing).
pub fn spectral_constants(w: &DMatrix<f64>) -> Result<(f64, f64), GraphError> {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "weight matrix must be square");
    let deviation = w - DMatrix::from_element(n, n, 1.0 / n as f64);
    let rho = deviation
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if rho >= 1.0 - 1e-12 {
        return Err(GraphError::NoSpectralGap { rho });
    }
    Ok((rho.max(f64::EPSILON), 1.0))
}
