//! Whole-graph statistics used to compare generated graphs with the graph
//! they were trained on.

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub adjacency_nonzeros: usize,
    pub power_law_exp: f64,
    pub triangle_count: u64,
    /// Global clustering: 3 * triangles / connected triples.
    pub transitivity: f64,
    pub char_path_length: f64,
    pub assortativity: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub edge_overlap_pct: Option<f64>,
}

pub fn graph_stats(g: &Graph, reference: Option<&Graph>) -> Result<GraphStats> {
    if g.n() < 3 {
        return Err(Error::invalid(format!(
            "graph statistics need at least 3 nodes, got {}",
            g.n()
        )));
    }
    if connected_triples(g) == 0 {
        return Err(Error::invalid("graph has no path of length 2"));
    }
    let (_, components) = g.components();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let triangles: u64 = triangles_per_node(g).iter().sum::<u64>() / 3;
    Ok(GraphStats {
        nodes: g.n(),
        edges: g.edge_count(),
        adjacency_nonzeros: g.nnz(),
        power_law_exp: power_law_exponent(g),
        triangle_count: triangles,
        transitivity: transitivity(g),
        char_path_length: characteristic_path_length(g)?,
        assortativity: assortativity(g),
        edge_overlap_pct: reference.map(|r| edge_overlap_pct(g, r)),
    })
}

/// Number of triangles each node participates in.
pub fn triangles_per_node(g: &Graph) -> Vec<u64> {
    let mut counts = vec![0u64; g.n()];
    for e in g.edges() {
        let (a, b) = (g.neighbors(e.0), g.neighbors(e.1));
        // common neighbours w > e.1, so each triangle u<v<w is seen once
        let (mut i, mut j) = (a.partition_point(|&w| w <= e.1), b.partition_point(|&w| w <= e.1));
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    counts[e.0] += 1;
                    counts[e.1] += 1;
                    counts[a[i]] += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    counts
}

fn connected_triples(g: &Graph) -> u64 {
    (0..g.n())
        .map(|v| {
            let d = g.degree(v) as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum()
}

pub fn transitivity(g: &Graph) -> f64 {
    let triples = connected_triples(g);
    if triples == 0 {
        return 0.0;
    }
    let triangles: u64 = triangles_per_node(g).iter().sum::<u64>() / 3;
    3.0 * triangles as f64 / triples as f64
}

/// Mean hop distance over all unordered node pairs of a connected graph.
pub fn characteristic_path_length(g: &Graph) -> Result<f64> {
    let n = g.n();
    if n < 2 {
        return Err(Error::invalid("path length needs at least 2 nodes"));
    }
    let mut total: u128 = 0;
    for s in 0..n {
        for d in g.bfs_distances(s) {
            if d == usize::MAX {
                return Err(Error::Disconnected {
                    components: g.components().1,
                });
            }
            total += d as u128;
        }
    }
    Ok(total as f64 / (n as f64 * (n - 1) as f64))
}

/// Pearson correlation of endpoint degrees over edges in both
/// orientations. Zero when every edge end has the same degree.
pub fn assortativity(g: &Graph) -> f64 {
    let (mut sx, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0);
    for e in g.edges() {
        let (a, b) = (g.degree(e.0) as f64, g.degree(e.1) as f64);
        sx += a + b;
        sxx += a * a + b * b;
        sxy += 2.0 * a * b;
        m += 2.0;
    }
    if m == 0.0 {
        return 0.0;
    }
    let mean = sx / m;
    let var = sxx / m - mean * mean;
    if var <= 1e-12 * mean.max(1.0).powi(2) {
        return 0.0;
    }
    (sxy / m - mean * mean) / var
}

/// Continuous maximum-likelihood power-law exponent with `d_min = 1`
/// over nodes of nonzero degree.
pub fn power_law_exponent(g: &Graph) -> f64 {
    const D_MIN: f64 = 1.0;
    let (count, log_sum) = (0..g.n())
        .map(|v| g.degree(v))
        .filter(|&d| d > 0)
        .fold((0usize, 0.0f64), |(c, s), d| {
            (c + 1, s + (d as f64 / (D_MIN - 0.5)).ln())
        });
    if count == 0 {
        return f64::NAN;
    }
    1.0 + count as f64 / log_sum
}

/// `rank[v]` = position of `v` when nodes are sorted by descending degree,
/// ties by ascending id.
pub fn degree_alignment(g: &Graph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    let mut rank = vec![0; g.n()];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    rank
}

/// Percentage of `reference` edges present in `g` after both graphs are
/// relabelled by [`degree_alignment`].
pub fn edge_overlap_pct(g: &Graph, reference: &Graph) -> f64 {
    if reference.edge_count() == 0 {
        return 0.0;
    }
    let rank_g = degree_alignment(g);
    let rank_r = degree_alignment(reference);
    let aligned: std::collections::HashSet<super::Edge> =
        g.edges().filter_map(|e| e.map(|v| rank_g[v])).collect();
    let hits = reference
        .edges()
        .filter_map(|e| e.map(|v| rank_r[v]))
        .filter(|e| aligned.contains(e))
        .count();
    100.0 * hits as f64 / reference.edge_count() as f64
}

#[cfg(test)]
mod tests {
    use super::super::generators::*;
    use super::*;

    #[test]
    fn triangle_stats() {
        let s = graph_stats(&complete(3), None).unwrap();
        assert_eq!(s.triangle_count, 1);
        assert_eq!(s.transitivity, 1.0);
        assert_eq!(s.char_path_length, 1.0);
        assert_eq!(s.assortativity, 0.0);
    }

    #[test]
    fn path_stats() {
        let s = graph_stats(&path(3), None).unwrap();
        assert!((s.char_path_length - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.transitivity, 0.0);
        assert_eq!(s.triangle_count, 0);
    }

    #[test]
    fn k4_triangles() {
        let t = triangles_per_node(&complete(4));
        assert_eq!(t, vec![3, 3, 3, 3]);
        assert_eq!(t.iter().sum::<u64>() / 3, 4);
    }

    #[test]
    fn star_is_triangle_free_and_disassortative() {
        let g = star(5);
        assert!(triangles_per_node(&g).iter().all(|&c| c == 0));
        assert!((assortativity(&g) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_or_disconnected() {
        assert!(graph_stats(&path(2), None).is_err());
        assert!(graph_stats(&Graph::empty(4), None).is_err());
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        assert!(matches!(
            graph_stats(&g, None),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn self_overlap_is_full() {
        let g = cycle(7);
        assert_eq!(edge_overlap_pct(&g, &g), 100.0);
        let s = graph_stats(&g, Some(&g)).unwrap();
        assert_eq!(s.edge_overlap_pct, Some(100.0));
    }

    #[test]
    fn power_law_on_regular_graph() {
        // all degrees 2: alpha = 1 + 1 / ln(4)
        let a = power_law_exponent(&cycle(5));
        assert!((a - (1.0 + 1.0 / 4f64.ln())).abs() < 1e-12);
    }
}
