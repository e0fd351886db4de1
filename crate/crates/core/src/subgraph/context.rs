//! Global context (spectral node identifiers on the full graph) and local
//! context (structural features recomputed on every noisy state).

use ndarray::Array2;

use crate::error::Result;
use crate::graph::{laplacian_eigens, Graph};

/// Columns of [`local_context`].
pub const LOCAL_DIM: usize = 7;

/// Rows closer than this (per entry, after rounding) count as identical.
const ROW_DECIMALS: f64 = 1e12;

/// `n x d'` matrix whose first `d` columns are the `d` smallest nonzero
/// Laplacian eigenvectors. When two rows coincide to 12 decimals a column
/// `degree + id * 2^-32`, min-max scaled to `[0, 1]`, is appended so that
/// every node gets a distinct row.
pub fn global_context(g: &Graph, d: usize) -> Result<Array2<f64>> {
    let n = g.n();
    let eig = laplacian_eigens(g, d.min(n.saturating_sub(1)))?;
    let d = eig.vectors.len();
    let mut keys: Vec<Vec<i64>> = (0..n)
        .map(|v| eig.vectors.iter().map(|col| (col[v] * ROW_DECIMALS).round() as i64).collect())
        .collect();
    keys.sort_unstable();
    let collide = keys.windows(2).any(|w| w[0] == w[1]);

    let width = d + usize::from(collide);
    let mut c = Array2::zeros((n, width));
    for (k, col) in eig.vectors.iter().enumerate() {
        for v in 0..n {
            c[(v, k)] = col[v];
        }
    }
    if collide {
        let raw: Vec<f64> = (0..n)
            .map(|v| g.degree(v) as f64 + v as f64 * 2f64.powi(-32))
            .collect();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in 0..n {
            c[(v, d)] = if hi > lo { (raw[v] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Ok(c)
}

/// Per-node structural features of `g`, one row per node:
/// `[degree, triangles, 4-cycles, 5-cycles, clustering, n / n_max, density]`.
/// Degree is scaled by `n - 1`, cycle participation counts by
/// `(n - 1)(n - 2) / 2`.
pub fn local_context(g: &Graph, n_max: usize) -> Array2<f64> {
    let nbrs: Vec<&[usize]> = (0..g.n()).map(|v| g.neighbors(v)).collect();
    local_from_neighbors(&nbrs, n_max)
}

/// [`local_context`] of a dense row-major 0/1 adjacency matrix.
pub fn local_context_dense(n: usize, adj: &[u8], n_max: usize) -> Array2<f64> {
    let lists: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && adj[i * n + j] != 0).collect())
        .collect();
    let nbrs: Vec<&[usize]> = lists.iter().map(Vec::as_slice).collect();
    local_from_neighbors(&nbrs, n_max)
}

fn local_from_neighbors(nbrs: &[&[usize]], n_max: usize) -> Array2<f64> {
    let n = nbrs.len();
    let mut q = Array2::zeros((n, LOCAL_DIM));
    if n == 0 {
        return q;
    }
    let counts = cycle_counts(nbrs);
    let edges: usize = nbrs.iter().map(|l| l.len()).sum::<usize>() / 2;
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    let deg_scale = n.saturating_sub(1) as f64;
    let cyc_scale = (n.saturating_sub(1) * n.saturating_sub(2)) as f64 / 2.0;
    let size = n as f64 / n_max.max(1) as f64;
    let density = if pairs > 0.0 { edges as f64 / pairs } else { 0.0 };
    for v in 0..n {
        let d = nbrs[v].len() as f64;
        let [t, c4, c5] = counts[v];
        let scaled = |x: f64, s: f64| if s > 0.0 { x / s } else { 0.0 };
        q[(v, 0)] = scaled(d, deg_scale);
        q[(v, 1)] = scaled(t, cyc_scale);
        q[(v, 2)] = scaled(c4, cyc_scale);
        q[(v, 3)] = scaled(c5, cyc_scale);
        q[(v, 4)] = scaled(t, d * (d - 1.0) / 2.0);
        q[(v, 5)] = size;
        q[(v, 6)] = density;
    }
    q
}

/// Per node: number of 3-, 4- and 5-cycles through it, from closed-walk
/// counts `diag(A^k)` with the degenerate walks subtracted.
pub(crate) fn cycle_counts(nbrs: &[&[usize]]) -> Vec<[f64; 3]> {
    let n = nbrs.len();
    let deg: Vec<f64> = nbrs.iter().map(|l| l.len() as f64).collect();
    // a2[i][j] = (A^2)_ij
    let mut a2 = vec![0.0f64; n * n];
    for i in 0..n {
        for &k in nbrs[i] {
            for &j in nbrs[k] {
                a2[i * n + j] += 1.0;
            }
        }
    }
    // t3[v] = (A^3)_vv
    let t3: Vec<f64> = (0..n).map(|v| nbrs[v].iter().map(|&k| a2[v * n + k]).sum()).collect();
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let a4: f64 = (0..n).map(|k| a2[v * n + k] * a2[v * n + k]).sum();
        // (A^5)_vv = sum_k (A^2)_vk (A^3)_kv, (A^3)_kv = sum_{j in N(v)} (A^2)_kj
        let a5: f64 = (0..n)
            .filter(|&k| a2[v * n + k] != 0.0)
            .map(|k| a2[v * n + k] * nbrs[v].iter().map(|&j| a2[k * n + j]).sum::<f64>())
            .sum();
        let d = deg[v];
        let nb_deg: f64 = nbrs[v].iter().map(|&u| deg[u] - 1.0).sum();
        let c4 = (a4 - d * d - nb_deg) / 2.0;
        let weighted: f64 = nbrs[v].iter().map(|&a| a2[v * n + a] * deg[a]).sum();
        let nb_t3: f64 = nbrs[v].iter().map(|&u| t3[u]).sum();
        let c5 = (a5 - 2.0 * d * t3[v] - 2.0 * weighted - nb_t3 + 5.0 * t3[v]) / 2.0;
        out.push([t3[v] / 2.0, c4, c5]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::rng_stream;
    use rand::Rng;

    fn nbrs(g: &Graph) -> Vec<&[usize]> {
        (0..g.n()).map(|v| g.neighbors(v)).collect()
    }

    /// Per-node count of simple cycles of length `len`, by enumerating
    /// every ordered node sequence.
    fn brute_cycles(g: &Graph, len: usize) -> Vec<f64> {
        fn extend(g: &Graph, path: &mut Vec<usize>, len: usize, hits: &mut [f64]) {
            let last = *path.last().unwrap();
            if path.len() == len {
                if g.has_edge(last, path[0]) {
                    for &v in path.iter() {
                        hits[v] += 1.0;
                    }
                }
                return;
            }
            for w in 0..g.n() {
                if g.has_edge(last, w) && !path.contains(&w) {
                    path.push(w);
                    extend(g, path, len, hits);
                    path.pop();
                }
            }
        }
        let mut hits = vec![0.0; g.n()];
        for s in 0..g.n() {
            extend(g, &mut vec![s], len, &mut hits);
        }
        // each cycle is traversed from each of its nodes in both directions
        hits.iter().map(|h| h / (2 * len) as f64).collect()
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = rng_stream(seed, 0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn cycle_counts_match_enumeration() {
        for seed in 0..25 {
            let g = random_graph(8, 0.5, seed);
            let counts = cycle_counts(&nbrs(&g));
            for (k, len) in [3, 4, 5].into_iter().enumerate() {
                let want = brute_cycles(&g, len);
                for v in 0..g.n() {
                    assert_eq!(counts[v][k], want[v], "seed {seed} len {len}");
                }
            }
        }
    }

    #[test]
    fn five_cycle() {
        let c = cycle_counts(&nbrs(&cycle(5)));
        assert!(c.iter().all(|x| *x == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn empty_graph_features() {
        let q = local_context(&Graph::empty(5), 10);
        for v in 0..5 {
            for k in 0..5 {
                assert_eq!(q[(v, k)], 0.0);
            }
            assert_eq!(q[(v, 5)], 0.5);
            assert_eq!(q[(v, 6)], 0.0);
        }
    }

    #[test]
    fn complete_graph_features() {
        let q = local_context(&complete(4), 4);
        for v in 0..4 {
            assert_eq!(q[(v, 0)], 1.0);
            assert_eq!(q[(v, 4)], 1.0);
            assert_eq!(q[(v, 6)], 1.0);
            // 3 triangles and 3 four-cycles through each node, scaled by 3
            assert_eq!(q[(v, 1)], 1.0);
            assert_eq!(q[(v, 2)], 1.0);
            assert_eq!(q[(v, 3)], 0.0);
        }
    }

    #[test]
    fn dense_matches_sparse() {
        let g = random_graph(9, 0.4, 3);
        assert_eq!(local_context(&g, 20), local_context_dense(9, &g.dense_adjacency(), 20));
    }

    fn rows_distinct(c: &Array2<f64>) -> bool {
        let rows: Vec<Vec<u64>> = c.rows().into_iter().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect();
        (0..rows.len()).all(|i| (i + 1..rows.len()).all(|j| rows[i] != rows[j]))
    }

    #[test]
    fn path_needs_no_tie_break() {
        let c = global_context(&path(4), 2).unwrap();
        assert_eq!(c.ncols(), 2);
        assert!(rows_distinct(&c));
        let f: Vec<f64> = c.column(0).to_vec();
        assert!(f.windows(2).all(|w| w[0] > w[1]) || f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn complete_graph_gets_tie_break() {
        let c = global_context(&complete(4), 2).unwrap();
        assert_eq!(c.ncols(), 3);
        assert!(rows_distinct(&c));
    }

    #[test]
    fn star_center_stays_apart() {
        let c = global_context(&star(5), 2).unwrap();
        assert_eq!(c.ncols(), 3);
        assert!(rows_distinct(&c));
        let dist = |a: usize, b: usize| -> f64 {
            c.row(a).iter().zip(c.row(b).iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let centroid: Vec<f64> = (0..c.ncols())
            .map(|k| (1..5).map(|v| c[(v, k)]).sum::<f64>() / 4.0)
            .collect();
        let to_centroid = |v: usize| -> f64 {
            c.row(v).iter().zip(&centroid).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        for leaf in 1..5 {
            assert!(to_centroid(0) > to_centroid(leaf));
        }
        assert!(dist(0, 1) > 0.0);
    }

    #[test]
    fn fiedler_distances_follow_path_distances() {
        // the Fiedler vector of a path is monotone, so a node lying between
        // v and w is never farther from v in context than w is
        let g = path(12);
        let c = global_context(&g, 1).unwrap();
        let f = c.column(0);
        for u in 0..12usize {
            for v in 0..12usize {
                for w in 0..12usize {
                    let between = (v <= u && u <= w) || (w <= u && u <= v);
                    if between {
                        assert!((f[u] - f[v]).abs() <= (f[v] - f[w]).abs() + 1e-12);
                    }
                }
            }
        }
    }
}
