//! Approximate correlation graph built from the top-scoring pairs.
//!
//! Pairs are ordered by compression ratio, non-increasing, with ties broken
//! lexicographically by `(i, j)`; `+inf` sentinels sort first. The top
//! `floor(gamma/100 * C(n,2))` pairs become edges. The same total order
//! backs the diagnostic compression curve, so cutoffs are consistent.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::VertexLabels;
use crate::pca::PairScores;

/// Undirected simple graph on the point set.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGraph {
    n: usize,
    /// Canonical edge list, `i < j`, sorted lexicographically.
    edges: Vec<(u32, u32)>,
    /// Sorted neighbor list per vertex.
    adjacency: Vec<Vec<u32>>,
    pub gamma_percent: f64,
}

impl CorrelationGraph {
    /// Builds a graph from raw edges (used by the synthetic generators).
    /// Self-loops and duplicate edges are rejected.
    pub fn from_edges(n: usize, mut edges: Vec<(u32, u32)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(Error::invalid_input(format!("self-loop at vertex {}", e.0)));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            if e.1 as usize >= n {
                return Err(Error::invalid_input(format!(
                    "edge ({}, {}) out of range for n={n}",
                    e.0, e.1
                )));
            }
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid_input("duplicate edge"));
        }
        let total_pairs = n * n.saturating_sub(1) / 2;
        let gamma_percent = if total_pairs == 0 {
            0.0
        } else {
            100.0 * edges.len() as f64 / total_pairs as f64
        };
        Ok(Self::assemble(n, edges, gamma_percent))
    }

    fn assemble(n: usize, edges: Vec<(u32, u32)>, gamma_percent: f64) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        CorrelationGraph {
            n,
            edges,
            adjacency,
            gamma_percent,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.adjacency[a].binary_search(&(b as u32)).is_ok()
    }

    /// Plain-text edge list, one `i j` pair per line, 0-based, `i < j`.
    pub fn write_edge_list(&self, w: &mut impl Write) -> Result<()> {
        for &(a, b) in &self.edges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }
}

/// Fraction of correct edges kept (`alpha`) and wrong edges admitted
/// (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GraphQuality {
    pub alpha: f64,
    pub beta: f64,
}

/// Comparator for the pair ordering: score non-increasing, ties by pair
/// index ascending. Scores never contain NaN.
#[inline]
fn pair_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    }
}

fn decode_pair(n: usize, mut idx: usize) -> (u32, u32) {
    // walk the row lengths; rows shrink as i grows
    let mut i = 0usize;
    let mut row = n - 1;
    while idx >= row {
        idx -= row;
        i += 1;
        row -= 1;
    }
    (i as u32, (i + 1 + idx) as u32)
}

/// Keeps the top `floor(gamma/100 * C(n,2))` pairs as edges.
pub fn build_correlation_graph(scores: &PairScores, gamma_percent: f64) -> Result<CorrelationGraph> {
    if !(gamma_percent > 0.0 && gamma_percent <= 100.0) {
        return Err(Error::invalid_parameter(format!(
            "gamma_percent must be in (0, 100], got {gamma_percent}"
        )));
    }
    let n = scores.n();
    let total = scores.len();
    let m = ((gamma_percent / 100.0) * total as f64).floor() as usize;
    let raw = scores.raw();
    let mut idx: Vec<usize> = (0..total).collect();
    if m > 0 && m < total {
        idx.select_nth_unstable_by(m - 1, |&a, &b| pair_order(raw, a, b));
    }
    let mut edges: Vec<(u32, u32)> = idx[..m].iter().map(|&p| decode_pair(n, p)).collect();
    edges.sort_unstable();
    Ok(CorrelationGraph::assemble(n, edges, gamma_percent))
}

/// Measures how close a graph is to the exact correlation graph of the
/// labels: `alpha` = intra edges present / intra pairs, `beta` = inter edges
/// / edges. Empty denominators count as perfect.
pub fn graph_quality(g: &CorrelationGraph, labels: &VertexLabels) -> Result<GraphQuality> {
    if labels.len() != g.n() {
        return Err(Error::MissingLabel(format!(
            "labels cover {} vertices, graph has {}",
            labels.len(),
            g.n()
        )));
    }
    let mut cluster_sizes = vec![0usize; labels.k()];
    for &l in labels.as_slice() {
        cluster_sizes[l as usize - 1] += 1;
    }
    let intra_pairs: usize = cluster_sizes.iter().map(|&s| s * (s - 1) / 2).sum();
    let mut intra_edges = 0usize;
    for &(a, b) in g.edges() {
        if labels.get(a as usize) == labels.get(b as usize) {
            intra_edges += 1;
        }
    }
    let alpha = if intra_pairs == 0 {
        1.0
    } else {
        intra_edges as f64 / intra_pairs as f64
    };
    let beta = if g.edge_count() == 0 {
        0.0
    } else {
        (g.edge_count() - intra_edges) as f64 / g.edge_count() as f64
    };
    Ok(GraphQuality { alpha, beta })
}

/// For each percentage in `grid`, the fraction of the top-p% pairs that are
/// intra-cluster. Uses the exact ordering of [`build_correlation_graph`].
pub fn compression_curve(
    scores: &PairScores,
    labels: &VertexLabels,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if labels.len() != scores.n() {
        return Err(Error::MissingLabel(format!(
            "labels cover {} vertices, scores have {}",
            labels.len(),
            scores.n()
        )));
    }
    for &p in grid {
        if !(p > 0.0 && p <= 100.0) {
            return Err(Error::invalid_parameter(format!(
                "curve percent must be in (0, 100], got {p}"
            )));
        }
    }
    let n = scores.n();
    let raw = scores.raw();
    let total = raw.len();
    let mut idx: Vec<usize> = (0..total).collect();
    idx.sort_unstable_by(|&a, &b| pair_order(raw, a, b));
    // prefix counts of intra pairs along the sorted order
    let mut intra_prefix = vec![0usize; total + 1];
    for (pos, &p) in idx.iter().enumerate() {
        let (a, b) = decode_pair(n, p);
        let intra = labels.get(a as usize) == labels.get(b as usize);
        intra_prefix[pos + 1] = intra_prefix[pos] + usize::from(intra);
    }
    Ok(grid
        .iter()
        .map(|&p| {
            let m = ((p / 100.0) * total as f64).floor() as usize;
            let frac = if m == 0 {
                1.0
            } else {
                intra_prefix[m] as f64 / m as f64
            };
            (p, frac)
        })
        .collect())
}
