//! Landmark labeling as MAP inference on a pairwise factor graph.
//!
//! The objective is the additive energy
//!
//! ```text
//! f = sum_i U_i(c_i) + sum_(i,j) in E  B_ij(c_i, c_j)
//! ```
//!
//! where `U` weights a candidate's heatmap peak by a Gaussian around the
//! landmark's training mean and `B` adds a Student-t density of the candidate
//! distance to twice a distance-deviation reward. The two parts of `B` live on
//! different natural scales (a density versus a value in `(0, 1]`); they are
//! summed as is.
//!
//! [`lbp_map`] runs max-sum belief propagation on the scores themselves
//! (equivalently max-product on `exp(score)` potentials), so it optimizes `f`
//! exactly on trees. [`brute_force_map`] enumerates all labelings and is the
//! reference for small graphs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heatmap::Candidate;
use crate::shapestats::{EdgeStats, Topology, TrainStats};

pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MrfError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("node {0} has no candidates")]
    EmptyNode(usize),
    #[error("graph has {nodes} nodes but topology covers {topology}")]
    NodeCountMismatch { nodes: usize, topology: usize },
    #[error("pairwise table for edge {edge:?} is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    TableShape {
        edge: (usize, usize),
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("non-finite score in {0}")]
    NonFinite(String),
    #[error("missing statistics for edge {0:?}")]
    MissingEdge((usize, usize)),
    #[error("labeling does not fit the graph: {0}")]
    InvalidLabeling(String),
    #[error("search space of {0} labelings exceeds the brute-force limit")]
    SearchSpaceTooLarge(u128),
    #[error("invalid LBP parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T, E = MrfError> = std::result::Result<T, E>;

/// Row-major score table `values[a * cols + b]` for candidate `a` of the edge's
/// first node and candidate `b` of its second.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl PairTable {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cols + b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    unary: Vec<Vec<f64>>,
    pairwise: Vec<PairTable>,
    topology: Topology,
}

impl FactorGraph {
    /// `pairwise[k]` belongs to `topology.edges()[k]`.
    pub fn new(unary: Vec<Vec<f64>>, pairwise: Vec<PairTable>, topology: Topology) -> Result<Self> {
        if unary.len() != topology.landmark_count() {
            return Err(MrfError::NodeCountMismatch {
                nodes: unary.len(),
                topology: topology.landmark_count(),
            });
        }
        if let Some(i) = unary.iter().position(|u| u.is_empty()) {
            return Err(MrfError::EmptyNode(i));
        }
        if let Some(i) = unary.iter().position(|u| u.iter().any(|v| !v.is_finite())) {
            return Err(MrfError::NonFinite(format!("unary of node {i}")));
        }
        if pairwise.len() != topology.edges().len() {
            return Err(MrfError::InvalidLabeling(format!(
                "{} pairwise tables for {} edges",
                pairwise.len(),
                topology.edges().len()
            )));
        }
        for (&(i, j), table) in topology.edges().iter().zip(&pairwise) {
            let (want_rows, want_cols) = (unary[i].len(), unary[j].len());
            if table.rows != want_rows || table.cols != want_cols || table.values.len() != want_rows * want_cols {
                return Err(MrfError::TableShape {
                    edge: (i, j),
                    rows: table.rows,
                    cols: table.cols,
                    want_rows,
                    want_cols,
                });
            }
            if table.values.iter().any(|v| !v.is_finite()) {
                return Err(MrfError::NonFinite(format!("pairwise table of edge {:?}", (i, j))));
            }
        }
        Ok(Self {
            unary,
            pairwise,
            topology,
        })
    }

    pub fn node_count(&self) -> usize {
        self.unary.len()
    }

    pub fn unary(&self, node: usize) -> &[f64] {
        &self.unary[node]
    }

    pub fn pairwise(&self) -> &[PairTable] {
        &self.pairwise
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn candidate_counts(&self) -> Vec<usize> {
        self.unary.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub assignment: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbpParams {
    pub max_iterations: usize,
    pub damping: f64,
    pub tolerance: f64,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            damping: 0.5,
            tolerance: 1e-6,
        }
    }
}

impl LbpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(MrfError::InvalidParams("max_iterations must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(MrfError::InvalidParams(format!("damping {} not in [0, 1)", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(MrfError::InvalidParams("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// `peak_value * exp(-|pos - mean|^2 / (2 sigma^2))` for every candidate (positions in mm).
pub fn unary_scores(candidates: &[Candidate], node: usize, stats: &TrainStats) -> Vec<f64> {
    let mean = stats.landmark_means[node];
    let k = 1.0 / (2.0 * stats.unary_sigma * stats.unary_sigma);
    candidates
        .iter()
        .map(|c| c.peak_value * (-c.position.distance_squared(&mean) * k).exp())
        .collect()
}

/// `t_pdf(d) + 2 exp(-|d_ref - d|)` over all candidate pairs, `d` in mm.
pub fn binary_scores(candidates_i: &[Candidate], candidates_j: &[Candidate], edge: &EdgeStats) -> PairTable {
    let t = edge.distribution();
    let reference = edge.reference_distance();
    let values = candidates_i
        .iter()
        .flat_map(|a| {
            candidates_j.iter().map(move |b| {
                let d = a.position.distance(&b.position);
                t.pdf(d) + 2.0 * (-(reference - d).abs()).exp()
            })
        })
        .collect();
    PairTable {
        rows: candidates_i.len(),
        cols: candidates_j.len(),
        values,
    }
}

/// One node per landmark, every node drawing from the same millimeter candidate pool.
pub fn build_graph(pool: &[Candidate], stats: &TrainStats) -> Result<FactorGraph> {
    if pool.is_empty() {
        return Err(MrfError::EmptyPool);
    }
    let unary = (0..stats.landmark_count)
        .map(|node| unary_scores(pool, node, stats))
        .collect();
    let pairwise = stats
        .topology
        .edges()
        .iter()
        .map(|&edge| {
            stats
                .edge(edge)
                .map(|e| binary_scores(pool, pool, e))
                .ok_or(MrfError::MissingEdge(edge))
        })
        .collect::<Result<Vec<_>>>()?;
    FactorGraph::new(unary, pairwise, stats.topology.clone())
}

pub fn energy(graph: &FactorGraph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != graph.node_count() {
        return Err(MrfError::InvalidLabeling(format!(
            "{} labels for {} nodes",
            assignment.len(),
            graph.node_count()
        )));
    }
    let mut total = 0.0;
    for (node, (&label, u)) in assignment.iter().zip(&graph.unary).enumerate() {
        let score = u.get(label).ok_or_else(|| {
            MrfError::InvalidLabeling(format!("label {label} out of range at node {node}"))
        })?;
        total += score;
    }
    for (&(i, j), table) in graph.topology.edges().iter().zip(&graph.pairwise) {
        total += table.get(assignment[i], assignment[j]);
    }
    Ok(total)
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Directed message slot: edge index plus direction (`true` = first node to second).
struct Directed {
    edge: usize,
    from: usize,
    to: usize,
    forward: bool,
}

/// Max-sum loopy belief propagation with a synchronous schedule and damping.
///
/// Messages are shifted so their maximum is zero after every update; this keeps
/// them bounded without changing any argmax.
pub fn lbp_map(graph: &FactorGraph, params: &LbpParams) -> Result<Labeling> {
    params.validate()?;
    let n = graph.node_count();
    let edges = graph.topology.edges();
    let counts = graph.candidate_counts();

    let mut directed = Vec::with_capacity(2 * edges.len());
    for (e, &(i, j)) in edges.iter().enumerate() {
        directed.push(Directed { edge: e, from: i, to: j, forward: true });
        directed.push(Directed { edge: e, from: j, to: i, forward: false });
    }
    // incoming[node] = indices of directed messages arriving at node
    let mut incoming = vec![Vec::new(); n];
    for (m, d) in directed.iter().enumerate() {
        incoming[d.to].push(m);
    }
    let mut messages: Vec<Vec<f64>> = directed.iter().map(|d| vec![0.0; counts[d.to]]).collect();

    let mut converged = directed.is_empty();
    let mut iterations = if directed.is_empty() { 1 } else { 0 };
    while !converged && iterations < params.max_iterations {
        iterations += 1;
        let mut next = Vec::with_capacity(messages.len());
        let mut max_change = 0.0f64;
        for (m, d) in directed.iter().enumerate() {
            let table = &graph.pairwise[d.edge];
            // sender's unary plus all its incoming messages except the one from the receiver
            let mut pre = graph.unary[d.from].clone();
            for &k in &incoming[d.from] {
                if directed[k].from != d.to {
                    for (p, v) in pre.iter_mut().zip(&messages[k]) {
                        *p += v;
                    }
                }
            }
            let mut out = vec![f64::NEG_INFINITY; counts[d.to]];
            for (xs, &base) in pre.iter().enumerate() {
                for (xt, o) in out.iter_mut().enumerate() {
                    let pair = if d.forward { table.get(xs, xt) } else { table.get(xt, xs) };
                    *o = o.max(base + pair);
                }
            }
            let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (o, old) in out.iter_mut().zip(&messages[m]) {
                let fresh = *o - top;
                *o = (1.0 - params.damping) * fresh + params.damping * old;
                max_change = max_change.max((*o - old).abs());
            }
            next.push(out);
        }
        messages = next;
        converged = max_change < params.tolerance;
    }

    let assignment = (0..n)
        .map(|node| {
            let mut belief = graph.unary[node].clone();
            for &k in &incoming[node] {
                for (b, v) in belief.iter_mut().zip(&messages[k]) {
                    *b += v;
                }
            }
            argmax_first(&belief)
        })
        .collect();
    Ok(Labeling {
        assignment,
        converged,
        iterations,
    })
}

/// Exhaustive MAP search. Among equal energies the lexicographically smallest
/// assignment wins.
pub fn brute_force_map(graph: &FactorGraph) -> Result<Labeling> {
    let counts = graph.candidate_counts();
    let space = counts
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
        .unwrap_or(u128::MAX);
    if space > BRUTE_FORCE_LIMIT {
        return Err(MrfError::SearchSpaceTooLarge(space));
    }
    let n = counts.len();
    let mut current = vec![0usize; n];
    let mut best = current.clone();
    let mut best_energy = energy(graph, &current)?;
    loop {
        // odometer increment, last node fastest, so enumeration is lexicographic
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(Labeling {
                    assignment: best,
                    converged: true,
                    iterations: 1,
                });
            }
            k -= 1;
            current[k] += 1;
            if current[k] < counts[k] {
                break;
            }
            current[k] = 0;
        }
        let e = energy(graph, &current)?;
        if e > best_energy {
            best_energy = e;
            best.clone_from(&current);
        }
    }
}
