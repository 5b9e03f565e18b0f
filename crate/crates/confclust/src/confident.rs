//! Spectral extraction of disjoint confident sets.
//!
//! Each round takes the dominant eigenvector of the residual graph's
//! adjacency matrix, orders the remaining vertices by their entries, keeps
//! the longest prefix whose induced subgraph has at least half of all
//! possible edges, and then drops prefix members whose induced degree is not
//! strictly above half the prefix size. Extracted members leave the residual
//! graph and the loop repeats until the prefix falls under the stop
//! threshold or no edges remain.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::corrgraph::CorrelationGraph;
use crate::error::{Error, Result};

/// Live view of the graph with extracted vertices removed.
pub struct ResidualGraph<'a> {
    graph: &'a CorrelationGraph,
    alive: Vec<bool>,
    alive_count: usize,
    edge_count: usize,
}

impl<'a> ResidualGraph<'a> {
    pub fn new(graph: &'a CorrelationGraph) -> Self {
        ResidualGraph {
            alive: vec![true; graph.n()],
            alive_count: graph.n(),
            edge_count: graph.edge_count(),
            graph,
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn alive_count(&self) -> usize {
        self.alive_count
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive[v]
    }

    /// Neighbors in the underlying graph; callers filter by liveness.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        self.graph.neighbors(v)
    }

    pub fn remove(&mut self, vertices: &[u32]) {
        for &v in vertices {
            let v = v as usize;
            if !self.alive[v] {
                continue;
            }
            for &u in self.graph.neighbors(v) {
                if self.alive[u as usize] {
                    self.edge_count -= 1;
                }
            }
            self.alive[v] = false;
            self.alive_count -= 1;
        }
    }

    pub fn alive_vertices(&self) -> Vec<u32> {
        (0..self.n())
            .filter(|&v| self.alive[v])
            .map(|v| v as u32)
            .collect()
    }

    /// `y = A x` restricted to live vertices.
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for v in 0..self.n() {
            if !self.alive[v] {
                y[v] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for &u in self.graph.neighbors(v) {
                if self.alive[u as usize] {
                    acc += x[u as usize];
                }
            }
            y[v] = acc;
        }
    }
}

/// One extracted set together with the selection state that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidentSet {
    /// Member vertices, ascending.
    pub members: Vec<u32>,
    /// Extraction round, 0-based.
    pub order_found: usize,
    /// The half-dense prefix the set was filtered from, in selection order.
    pub prefix: Vec<u32>,
    /// Prefix length at selection time.
    pub prefix_size_c: usize,
    /// Degree threshold used by the filter (`c / 2`).
    pub mean_degree_filter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenRound {
    pub round: usize,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionResult {
    pub sets: Vec<ConfidentSet>,
    /// Vertices in no confident set, ascending.
    pub remaining: Vec<u32>,
    pub eigen_history: Vec<EigenRound>,
    /// Stop threshold the run used.
    pub stop_threshold: usize,
}

impl ExtractionResult {
    pub fn covered(&self) -> usize {
        self.sets.iter().map(|s| s.members.len()).sum()
    }
}

struct EigenSolve {
    eigenvalue: f64,
    vector: Vec<f64>,
    iterations: usize,
    residual: f64,
}

/// Power iteration on `A + I` so that near-bipartite residuals (stars,
/// single edges) cannot oscillate between the two ends of the spectrum; the
/// reported eigenvalue and residual are with respect to `A` itself.
fn solve_top_eigen(g: &ResidualGraph, tol: f64, max_iter: usize, seed: u64) -> Result<EigenSolve> {
    if g.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    if !(tol > 0.0) {
        return Err(Error::invalid_parameter("tol must be positive"));
    }
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0f64; n];
    for (v, xv) in x.iter_mut().enumerate() {
        if g.is_alive(v) {
            *xv = rng.sample::<f64, _>(StandardNormal);
        }
    }
    normalize(&mut x);
    let mut y = vec![0.0f64; n];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        g.matvec(&x, &mut y);
        lambda = dot(&x, &y);
        residual = y
            .iter()
            .zip(x.iter())
            .map(|(yi, xi)| {
                let e = yi - lambda * xi;
                e * e
            })
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda.max(1.0) {
            orient(&mut x);
            return Ok(EigenSolve {
                eigenvalue: lambda,
                vector: x,
                iterations,
                residual,
            });
        }
        // shifted step: z = (A + I) x
        for v in 0..n {
            y[v] += x[v];
        }
        normalize(&mut y);
        std::mem::swap(&mut x, &mut y);
    }
    orient(&mut x);
    Err(Error::Convergence {
        round: None,
        iterations,
        residual,
        best_eigenvalue: lambda,
        best_vector: x,
    })
}

/// Dominant eigenpair of the live adjacency matrix by seeded power
/// iteration. The sign is fixed so the entry sum is non-negative, with the
/// first nonzero entry made positive on a zero sum.
pub fn top_eigenvector(
    g: &ResidualGraph,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let s = solve_top_eigen(g, tol, max_iter, seed)?;
    Ok((s.eigenvalue, s.vector))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

fn orient(x: &mut [f64]) {
    let sum: f64 = x.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        match x.iter().find(|v| **v != 0.0) {
            Some(first) => *first < 0.0,
            None => false,
        }
    };
    if flip {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Longest prefix of vertices, ordered by descending eigenvector entry
/// (ties by index), whose induced edge count reaches half the possible
/// pairs. Returns the empty vector when no `t >= 3` qualifies.
///
/// If the vector carries real negative mass (a mixed eigenspace), only the
/// strictly positive part participates.
pub fn select_dense_prefix(v: &[f64], g: &ResidualGraph) -> Vec<u32> {
    assert_eq!(v.len(), g.n(), "eigenvector length must match vertex count");
    let mut order: Vec<u32> = (0..g.n() as u32)
        .filter(|&u| g.is_alive(u as usize))
        .collect();
    order.sort_unstable_by(|&a, &b| {
        match v[b as usize].partial_cmp(&v[a as usize]) {
            Some(std::cmp::Ordering::Equal) | None => a.cmp(&b),
            Some(o) => o,
        }
    });
    let max_abs = order
        .iter()
        .map(|&u| v[u as usize].abs())
        .fold(0.0f64, f64::max);
    if order
        .iter()
        .any(|&u| v[u as usize] < -1e-6 * max_abs.max(1e-300))
    {
        order.retain(|&u| v[u as usize] > 0.0);
    }

    let mut in_prefix = vec![false; g.n()];
    let mut edges: u64 = 0;
    let mut best_c = 0usize;
    for (pos, &u) in order.iter().enumerate() {
        let t = pos + 1;
        for &w in g.neighbors(u as usize) {
            if in_prefix[w as usize] {
                edges += 1;
            }
        }
        in_prefix[u as usize] = true;
        // edges >= C(t,2) / 2  <=>  4 * edges >= t * (t - 1)
        if t >= 3 && 4 * edges >= (t as u64) * (t as u64 - 1) {
            best_c = t;
        }
    }
    order.truncate(best_c);
    order
}

/// Keeps prefix members whose induced degree is strictly above `c / 2`.
/// Returns `None` when nobody survives, which callers treat as termination.
pub fn filter_low_degree(prefix: &[u32], g: &ResidualGraph, order_found: usize) -> Option<ConfidentSet> {
    if prefix.is_empty() {
        return None;
    }
    let c = prefix.len();
    let mut in_prefix = vec![false; g.n()];
    for &u in prefix {
        in_prefix[u as usize] = true;
    }
    let mut members: Vec<u32> = prefix
        .iter()
        .copied()
        .filter(|&u| {
            let deg = g
                .neighbors(u as usize)
                .iter()
                .filter(|&&w| in_prefix[w as usize])
                .count();
            // deg > c / 2, exactly
            2 * deg > c
        })
        .collect();
    if members.is_empty() {
        return None;
    }
    members.sort_unstable();
    Some(ConfidentSet {
        members,
        order_found,
        prefix: prefix.to_vec(),
        prefix_size_c: c,
        mean_degree_filter: c as f64 / 2.0,
    })
}

/// Runs the extraction loop until the prefix drops under `stop_threshold`
/// or the residual graph has no edges. The final undersized prefix still
/// contributes its set before the loop stops.
pub fn extract_confident_sets(
    g: &CorrelationGraph,
    stop_threshold: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<ExtractionResult> {
    if stop_threshold < 3 {
        return Err(Error::invalid_parameter(
            "stop threshold must be at least 3",
        ));
    }
    let mut residual = ResidualGraph::new(g);
    let mut sets = Vec::new();
    let mut eigen_history = Vec::new();
    let mut round = 0usize;
    while residual.edge_count() > 0 {
        let mut rng_seed = ChaCha8Rng::seed_from_u64(seed);
        rng_seed.set_stream(round as u64);
        let per_round_seed = rng_seed.random::<u64>();
        let solve = solve_top_eigen(&residual, tol, max_iter, per_round_seed).map_err(|e| {
            match e {
                Error::Convergence {
                    iterations,
                    residual,
                    best_eigenvalue,
                    best_vector,
                    ..
                } => Error::Convergence {
                    round: Some(round),
                    iterations,
                    residual,
                    best_eigenvalue,
                    best_vector,
                },
                other => other,
            }
        })?;
        let prefix = select_dense_prefix(&solve.vector, &residual);
        eigen_history.push(EigenRound {
            round,
            eigenvalue: solve.eigenvalue,
            iterations: solve.iterations,
            residual: solve.residual,
        });
        if prefix.is_empty() {
            break;
        }
        let c = prefix.len();
        let Some(set) = filter_low_degree(&prefix, &residual, round) else {
            break;
        };
        residual.remove(&set.members);
        sets.push(set);
        round += 1;
        if c < stop_threshold {
            break;
        }
    }
    Ok(ExtractionResult {
        remaining: residual.alive_vertices(),
        sets,
        eigen_history,
        stop_threshold,
    })
}
