//! Ego-network sampling, size-capped subsampling and the empirical
//! histograms that drive large-graph generation.

mod context;

use std::collections::{BTreeMap, VecDeque};

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use context::{global_context, local_context, local_context_dense, LOCAL_DIM};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng_stream;

/// Redraws allowed before [`subsample`] falls back to a truncated 1-hop ego
/// net.
const SUBSAMPLE_ATTEMPTS: usize = 20;

/// An induced subgraph of a parent graph together with the parent's global
/// context rows for its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// `parent_ids[i]` is the parent id of local node `i`; ascending.
    pub parent_ids: Vec<usize>,
    /// Local index of the node the subgraph was grown from.
    pub center: usize,
    pub graph: Graph,
    /// Rows of the parent's global context, copied verbatim.
    pub context: Array2<f64>,
}

impl Subgraph {
    /// Induced subgraph of `parent` on `nodes`; `center` is a parent id that
    /// must be among them.
    pub fn induced(parent: &Graph, context: &Array2<f64>, nodes: &[usize], center: usize) -> Result<Self> {
        if context.nrows() != parent.n() {
            return Err(Error::Shape(format!(
                "context has {} rows for a {}-node graph",
                context.nrows(),
                parent.n()
            )));
        }
        let mut ids = nodes.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let center = ids
            .binary_search(&center)
            .map_err(|_| Error::invalid(format!("center {center} is not among the subgraph nodes")))?;
        Ok(Subgraph {
            graph: parent.induced_subgraph(&ids),
            context: context.select(Axis(0), &ids),
            parent_ids: ids,
            center,
        })
    }

    pub fn n(&self) -> usize {
        self.parent_ids.len()
    }

    /// Keeps the local nodes `local` (any order), mapping the center along
    /// if present, else to the first kept node.
    fn restrict(&self, local: &[usize]) -> Subgraph {
        let mut keep = local.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let center = keep.binary_search(&self.center).unwrap_or(0);
        Subgraph {
            parent_ids: keep.iter().map(|&i| self.parent_ids[i]).collect(),
            center,
            graph: self.graph.induced_subgraph(&keep),
            context: self.context.select(Axis(0), &keep),
        }
    }
}

/// One subgraph per node: the induced subgraph on its `hops`-hop ball.
pub fn sample_ego_networks(g: &Graph, context: &Array2<f64>, hops: usize) -> Result<Vec<Subgraph>> {
    if !g.is_connected() {
        return Err(Error::Disconnected {
            components: g.components().1,
        });
    }
    (0..g.n())
        .map(|v| Subgraph::induced(g, context, &g.ball(v, hops), v))
        .collect()
}

/// Caps `s` at `n_max` nodes: keeps the center plus `n_max - 1` uniformly
/// drawn nodes and returns the connected component of the center. The draw
/// uses the stream of the center's parent id, so results do not depend on
/// the order subgraphs are processed in.
pub fn subsample(s: &Subgraph, n_max: usize, seed: u64) -> Result<Subgraph> {
    let mut rng = rng_stream(seed, s.parent_ids[s.center] as u64);
    subsample_keeping(s, n_max, &[s.center], &mut rng)
}

/// Like [`subsample`] but every local node in `keep` survives; `keep` must
/// induce a connected subgraph and `keep[0]` becomes the center.
pub fn subsample_keeping(s: &Subgraph, n_max: usize, keep: &[usize], rng: &mut impl Rng) -> Result<Subgraph> {
    if n_max < 2 {
        return Err(Error::invalid(format!("n_max must be at least 2, got {n_max}")));
    }
    if keep.is_empty() || keep.iter().any(|&k| k >= s.n()) {
        return Err(Error::invalid("subsample: retained nodes out of range"));
    }
    if keep.len() > n_max {
        return Err(Error::invalid(format!(
            "cannot retain {} nodes under n_max = {n_max}",
            keep.len()
        )));
    }
    let root = keep[0];
    let mut out = if s.n() <= n_max {
        s.clone()
    } else {
        let others: Vec<usize> = (0..s.n()).filter(|v| !keep.contains(v)).collect();
        let mut found = None;
        for _ in 0..SUBSAMPLE_ATTEMPTS {
            let mut chosen: Vec<usize> = keep.to_vec();
            chosen.extend(index::sample(rng, others.len(), n_max - keep.len()).into_iter().map(|i| others[i]));
            chosen.sort_unstable();
            let induced = s.graph.induced_subgraph(&chosen);
            let local_root = chosen.binary_search(&root).expect("root kept");
            let reach = induced.bfs_distances(local_root);
            let comp: Vec<usize> = (0..chosen.len())
                .filter(|&i| reach[i] != usize::MAX)
                .map(|i| chosen[i])
                .collect();
            if comp.len() >= 2 && keep.iter().all(|k| comp.binary_search(k).is_ok()) {
                found = Some(comp);
                break;
            }
        }
        let nodes = found.unwrap_or_else(|| grow_from(&s.graph, keep, n_max));
        s.restrict(&nodes)
    };
    out.center = out
        .parent_ids
        .binary_search(&s.parent_ids[root])
        .expect("root kept");
    Ok(out)
}

/// `keep` followed by its neighbours in discovery order, truncated to
/// `n_max`.
fn grow_from(g: &Graph, keep: &[usize], n_max: usize) -> Vec<usize> {
    let mut seen = vec![false; g.n()];
    let mut out: Vec<usize> = Vec::with_capacity(n_max);
    for &k in keep {
        if !seen[k] {
            seen[k] = true;
            out.push(k);
        }
    }
    let mut queue: VecDeque<usize> = keep.iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        if out.len() >= n_max {
            break;
        }
        for &u in g.neighbors(v) {
            if out.len() >= n_max {
                break;
            }
            if !seen[u] {
                seen[u] = true;
                out.push(u);
            }
        }
    }
    out
}

/// Context rows and subgraph sizes seen during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    /// Distinct context rows, in ascending order of their bit patterns.
    pub rows: Vec<Vec<f64>>,
    /// `counts[i]` = occurrences of `rows[i]` across all subgraphs.
    pub counts: Vec<usize>,
    /// Subgraph node count -> number of subgraphs.
    pub sizes: BTreeMap<usize, usize>,
}

/// Bit pattern of a context row with `-0.0` folded into `0.0`, used as an
/// exact identity key.
pub fn row_key(row: impl IntoIterator<Item = f64>) -> Vec<u64> {
    row.into_iter()
        .map(|x| if x == 0.0 { 0u64 } else { x.to_bits() })
        .collect()
}

pub fn build_histograms(subgraphs: &[Subgraph]) -> Histograms {
    let mut global: BTreeMap<Vec<u64>, (Vec<f64>, usize)> = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    for s in subgraphs {
        *sizes.entry(s.n()).or_insert(0) += 1;
        for row in s.context.rows() {
            let entry = global
                .entry(row_key(row.iter().copied()))
                .or_insert_with(|| (row.to_vec(), 0));
            entry.1 += 1;
        }
    }
    let (rows, counts) = global.into_values().unzip();
    Histograms { rows, counts, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;

    fn with_context(g: &Graph) -> Array2<f64> {
        global_context(g, 2).unwrap()
    }

    #[test]
    fn star_center_ego_is_whole_star() {
        let g = star(5);
        let egos = sample_ego_networks(&g, &with_context(&g), 1).unwrap();
        assert_eq!(egos.len(), 5);
        assert_eq!(egos[0].graph, g);
        assert_eq!(egos[0].center, 0);
        assert_eq!(egos[3].parent_ids, vec![0, 3]);
    }

    #[test]
    fn path_two_hop_is_whole_path() {
        let g = path(3);
        for s in sample_ego_networks(&g, &with_context(&g), 2).unwrap() {
            assert_eq!(s.graph, g);
        }
    }

    #[test]
    fn context_rows_are_copied() {
        let g = cycle(8);
        let c = with_context(&g);
        for s in sample_ego_networks(&g, &c, 2).unwrap() {
            for (i, &p) in s.parent_ids.iter().enumerate() {
                assert_eq!(s.context.row(i), c.row(p));
            }
        }
    }

    #[test]
    fn small_subgraph_unchanged() {
        let g = path(10);
        let s = Subgraph::induced(&g, &with_context(&g), &(0..10).collect::<Vec<_>>(), 4).unwrap();
        assert_eq!(subsample(&s, 50, 1).unwrap(), s);
        assert_eq!(subsample(&s, 10, 1).unwrap(), s);
    }

    #[test]
    fn complete_graph_subsample_is_full_size() {
        let g = complete(100);
        let c = Array2::from_shape_fn((100, 1), |(v, _)| v as f64);
        let s = Subgraph::induced(&g, &c, &(0..100).collect::<Vec<_>>(), 17).unwrap();
        let t = subsample(&s, 50, 3).unwrap();
        assert_eq!(t.n(), 50);
        assert_eq!(t.parent_ids[t.center], 17);
        assert_eq!(t.graph.edge_count(), 50 * 49 / 2);
        assert_eq!(subsample(&t, 50, 9).unwrap(), t);
    }

    #[test]
    fn sparse_subsample_falls_back_connected() {
        // a long path almost never survives random thinning intact
        let g = path(400);
        let c = Array2::from_shape_fn((400, 1), |(v, _)| v as f64);
        let s = Subgraph::induced(&g, &c, &(0..400).collect::<Vec<_>>(), 200).unwrap();
        let t = subsample(&s, 30, 5).unwrap();
        assert!(t.graph.is_connected());
        assert!(t.n() >= 2 && t.n() <= 30);
        assert_eq!(t.parent_ids[t.center], 200);
    }

    #[test]
    fn keeping_pins_nodes() {
        let g = complete(60);
        let c = Array2::from_shape_fn((60, 1), |(v, _)| v as f64);
        let s = Subgraph::induced(&g, &c, &(0..60).collect::<Vec<_>>(), 0).unwrap();
        let mut rng = rng_stream(1, 0);
        let t = subsample_keeping(&s, 10, &[42, 7], &mut rng).unwrap();
        assert_eq!(t.n(), 10);
        assert!(t.parent_ids.contains(&7));
        assert_eq!(t.parent_ids[t.center], 42);
    }

    #[test]
    fn histogram_sizes() {
        let g = path(3);
        let egos = sample_ego_networks(&g, &with_context(&g), 1).unwrap();
        let h = build_histograms(&egos);
        assert_eq!(h.sizes, BTreeMap::from([(2, 2), (3, 1)]));
        assert_eq!(h.rows.len(), 3);
        assert_eq!(h.counts.iter().sum::<usize>(), 2 + 2 + 3);
    }

    #[test]
    fn histogram_size_multiset() {
        let g = complete(5);
        let c = with_context(&g);
        let subs: Vec<Subgraph> = [vec![0, 1, 2], vec![2, 3, 4], vec![0, 1, 2, 3, 4]]
            .iter()
            .map(|ns| Subgraph::induced(&g, &c, ns, ns[0]).unwrap())
            .collect();
        assert_eq!(build_histograms(&subs).sizes, BTreeMap::from([(3, 2), (5, 1)]));
    }

    #[test]
    fn negative_zero_folds() {
        assert_eq!(row_key([-0.0, 1.0]), row_key([0.0, 1.0]));
    }
}
