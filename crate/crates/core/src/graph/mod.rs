//! Undirected simple graphs and the structural routines shared by every
//! other module: connectivity, induced subgraphs, component extraction.
//!
//! A [`Graph`] stores sorted adjacency lists. Self-loops and duplicate edges
//! are dropped on construction, so the adjacency view is always symmetric
//! with an empty diagonal.

mod io;
mod spectral;
mod stats;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    parse_edge_list, read_edge_list, read_edge_set, read_labels, write_atomic, write_edge_list,
    write_edge_set,
};
pub use spectral::{laplacian_eigens, residual_inf, Eigenpairs};
pub use stats::{
    assortativity, characteristic_path_length, degree_alignment, edge_overlap_pct, graph_stats,
    power_law_exponent, transitivity, triangles_per_node, GraphStats,
};

/// Unordered node pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(pub usize, pub usize);

impl Edge {
    /// Returns `None` for self-loops.
    pub fn new(a: usize, b: usize) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Edge(a, b)),
            std::cmp::Ordering::Greater => Some(Edge(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn map(self, f: impl Fn(usize) -> usize) -> Option<Self> {
        Edge::new(f(self.0), f(self.1))
    }
}

pub type EdgeSet = BTreeSet<Edge>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    edge_count: usize,
    labels: Option<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            edge_count: 0,
            labels: None,
        }
    }

    /// Builds a simple graph on `n` nodes. Self-loops and repeated pairs are
    /// ignored; endpoints must be `< n`.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(n);
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            g.adj[u].push(v);
            g.adj[v].push(u);
        }
        g.normalize();
        Ok(g)
    }

    pub fn from_edge_set(n: usize, edges: &EdgeSet) -> Result<Self> {
        Graph::from_edges(n, edges.iter().map(|e| (e.0, e.1)))
    }

    fn normalize(&mut self) {
        let mut count = 0;
        for (v, list) in self.adj.iter_mut().enumerate() {
            list.retain(|&u| u != v);
            list.sort_unstable();
            list.dedup();
            count += list.len();
        }
        self.edge_count = count / 2;
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adj.len()
    }

    /// Number of undirected edges.
    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Adjacency-matrix nonzeros (both orientations).
    #[inline]
    pub fn nnz(&self) -> usize {
        2 * self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n() && v < self.n() && self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges in ascending `(u, v)` order with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let start = list.partition_point(|&v| v <= u);
            list[start..].iter().map(move |&v| Edge(u, v))
        })
    }

    pub fn edge_set(&self) -> EdgeSet {
        self.edges().collect()
    }

    /// Returns `true` if the edge was new.
    pub fn insert_edge(&mut self, u: usize, v: usize) -> bool {
        if u == v || u >= self.n() || v >= self.n() {
            return false;
        }
        match self.adj[u].binary_search(&v) {
            Ok(_) => false,
            Err(pos) => {
                self.adj[u].insert(pos, v);
                let pos = self.adj[v].binary_search(&u).unwrap_err();
                self.adj[v].insert(pos, u);
                self.edge_count += 1;
                true
            }
        }
    }

    /// Returns `true` if the edge existed.
    pub fn remove_edge(&mut self, u: usize, v: usize) -> bool {
        if u >= self.n() || v >= self.n() {
            return false;
        }
        match self.adj[u].binary_search(&v) {
            Ok(pos) => {
                self.adj[u].remove(pos);
                let pos = self.adj[v].binary_search(&u).expect("symmetric adjacency");
                self.adj[v].remove(pos);
                self.edge_count -= 1;
                true
            }
            Err(_) => false,
        }
    }

    /// Hop distances from `src`; unreachable nodes get `usize::MAX`.
    pub fn bfs_distances(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            for &u in &self.adj[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Nodes within `hops` of `src`, in BFS order.
    pub fn ball(&self, src: usize, hops: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut order = vec![src];
        dist[src] = 0;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            if dist[v] == hops {
                continue;
            }
            for &u in &self.adj[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    order.push(u);
                }
            }
        }
        order
    }

    /// Node ids on one shortest path from `a` to `b`, inclusive.
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let mut parent = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        parent[a] = a;
        queue.push_back(a);
        while let Some(v) = queue.pop_front() {
            if v == b {
                break;
            }
            for &u in &self.adj[v] {
                if parent[u] == usize::MAX {
                    parent[u] = v;
                    queue.push_back(u);
                }
            }
        }
        if parent[b] == usize::MAX {
            return None;
        }
        let mut path = vec![b];
        let mut v = b;
        while v != a {
            v = parent[v];
            path.push(v);
        }
        path.reverse();
        Some(path)
    }

    /// Component id per node, numbered in order of smallest contained id.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.n()];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.n() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in &self.adj[v] {
                    if comp[u] == usize::MAX {
                        comp[u] = count;
                        stack.push(u);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 0 || self.components().1 == 1
    }

    /// Largest connected component together with `remap[new_id] = old_id`.
    /// Ties between equally large components go to the one holding the
    /// smallest original id.
    pub fn largest_connected_component(&self) -> (Graph, Vec<usize>) {
        if self.n() == 0 {
            return (Graph::empty(0), Vec::new());
        }
        let (comp, count) = self.components();
        let mut sizes = vec![0usize; count];
        for &c in &comp {
            sizes[c] += 1;
        }
        // components are numbered by smallest member, so the first maximum wins ties
        let best = (0..count).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
        let nodes: Vec<usize> = (0..self.n()).filter(|&v| comp[v] == best).collect();
        (self.induced_subgraph(&nodes), nodes)
    }

    /// Subgraph induced on `nodes`; node `i` of the result is `nodes[i]`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut local = vec![usize::MAX; self.n()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        let mut count = 0;
        for (i, &v) in nodes.iter().enumerate() {
            for &u in &self.adj[v] {
                let j = local[u];
                if j != usize::MAX {
                    adj[i].push(j);
                    count += 1;
                }
            }
            adj[i].sort_unstable();
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| nodes.iter().map(|&v| l[v]).collect());
        Graph {
            adj,
            edge_count: count / 2,
            labels,
        }
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n() {
            return Err(Error::Shape(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n()
            )));
        }
        let mut g = Graph::from_edges(self.n(), self.edges().map(|e| (perm[e.0], perm[e.1])))?;
        if let Some(l) = &self.labels {
            let mut labels = vec![0; self.n()];
            for (v, &p) in perm.iter().enumerate() {
                labels[p] = l[v];
            }
            g.labels = Some(labels);
        }
        Ok(g)
    }

    /// Dense symmetric 0/1 adjacency, row-major.
    pub fn dense_adjacency(&self) -> Vec<u8> {
        let n = self.n();
        let mut a = vec![0u8; n * n];
        for (u, list) in self.adj.iter().enumerate() {
            for &v in list {
                a[u * n + v] = 1;
            }
        }
        a
    }

    pub fn from_dense_adjacency(n: usize, a: &[u8]) -> Graph {
        let mut adj = vec![Vec::new(); n];
        let mut count = 0;
        for u in 0..n {
            for v in 0..n {
                if u != v && (a[u * n + v] != 0 || a[v * n + u] != 0) {
                    adj[u].push(v);
                    count += 1;
                }
            }
        }
        Graph {
            adj,
            edge_count: count / 2,
            labels: None,
        }
    }
}

/// Simple generators used by tests and examples.
pub mod generators {
    use super::Graph;

    pub fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    pub fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    pub fn complete(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
            .expect("valid complete graph")
    }

    /// Star with center `0` and `n - 1` leaves.
    pub fn star(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (0, i))).expect("valid star")
    }
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;

    #[test]
    fn drops_loops_and_duplicates() {
        let g = Graph::from_edges(3, [(0, 1), (1, 0), (2, 2)]).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_set(), [Edge(0, 1)].into_iter().collect());
        assert_eq!(g.nnz(), 2);
    }

    #[test]
    fn lcc_tie_goes_to_smallest_id() {
        // two disjoint triangles plus an isolated node
        let g = Graph::from_edges(7, [(1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6)]).unwrap();
        let (lcc, remap) = g.largest_connected_component();
        assert_eq!(remap, vec![1, 2, 3]);
        assert_eq!(lcc.edge_count(), 3);
        assert!(lcc.is_connected());
    }

    #[test]
    fn lcc_of_connected_graph_is_identity() {
        let g = cycle(6);
        let (lcc, remap) = g.largest_connected_component();
        assert_eq!(remap, (0..6).collect::<Vec<_>>());
        assert_eq!(lcc.edge_set(), g.edge_set());
    }

    #[test]
    fn lcc_of_empty_graph() {
        let (lcc, remap) = Graph::empty(0).largest_connected_component();
        assert_eq!(lcc.n(), 0);
        assert!(remap.is_empty());
    }

    #[test]
    fn ball_and_paths() {
        let g = path(5);
        let mut b = g.ball(2, 1);
        b.sort();
        assert_eq!(b, vec![1, 2, 3]);
        assert_eq!(g.shortest_path(0, 4).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(g.bfs_distances(0)[4], 4);
    }

    #[test]
    fn insert_remove_roundtrip() {
        let mut g = star(4);
        assert!(!g.insert_edge(0, 1));
        assert!(g.insert_edge(1, 2));
        assert_eq!(g.edge_count(), 4);
        assert!(g.remove_edge(2, 1));
        assert!(!g.remove_edge(2, 1));
        assert_eq!(g.edge_set(), star(4).edge_set());
    }

    #[test]
    fn dense_roundtrip() {
        let g = complete(4);
        let d = g.dense_adjacency();
        assert_eq!(Graph::from_dense_adjacency(4, &d).edge_set(), g.edge_set());
    }

    #[test]
    fn label_length_checked() {
        assert!(path(3).with_labels(vec![0, 1]).is_err());
        let g = path(3).with_labels(vec![0, 1, 2]).unwrap();
        assert_eq!(g.induced_subgraph(&[2, 0]).labels(), Some(&[2, 0][..]));
    }
}
