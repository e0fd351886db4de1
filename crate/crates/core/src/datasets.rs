//! Experimental graphs and the corruption protocol that turns a clean target
//! graph into an observed one.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{read_edge_list, Edge, EdgeSet, Graph};
use crate::rng_stream;

/// Environment variable naming the directory that holds `cora.edges` and
/// `polblogs.edges`.
pub const DATA_DIR_ENV: &str = "SUBDIFF_DATA_DIR";

/// Node labels of BA-Shapes: base nodes, house bottom, house top, apex.
pub const LABEL_BASE: usize = 0;
pub const LABEL_BOTTOM: usize = 1;
pub const LABEL_TOP: usize = 2;
pub const LABEL_APEX: usize = 3;

/// Barabási–Albert graph: `m` seed nodes, the first arrival links to all of
/// them, later arrivals pick `m` distinct targets with probability
/// proportional to degree. Always `m * (n - m)` edges.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m == 0 || n <= m {
        return Err(Error::invalid(format!(
            "barabasi_albert needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    let mut rng = rng_stream(seed, 0);
    let mut edges = Vec::with_capacity(m * (n - m));
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    let mut targets: Vec<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            edges.push((source, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat(source).take(m));
        targets.clear();
        while targets.len() < m {
            let x = repeated[rng.gen_range(0..repeated.len())];
            if !targets.contains(&x) {
                targets.push(x);
            }
        }
    }
    Graph::from_edges(n, edges)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaShapesConfig {
    pub n_base: usize,
    pub m: usize,
    pub n_motifs: usize,
    /// Extra uniformly random edges, as a fraction of the edge count before
    /// they are added.
    pub random_edge_frac: f64,
    pub seed: u64,
}

impl Default for BaShapesConfig {
    fn default() -> Self {
        BaShapesConfig {
            n_base: 300,
            m: 5,
            n_motifs: 80,
            random_edge_frac: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaShapes {
    /// Labelled with [`LABEL_BASE`] .. [`LABEL_APEX`].
    pub graph: Graph,
    /// `houses[h]` = [bottom-left, bottom-right, top-right, top-left, apex].
    pub houses: Vec<[usize; 5]>,
    /// All 6 edges of every house.
    pub motif_edges: EdgeSet,
    /// The two apex edges of every house.
    pub roof_edges: EdgeSet,
}

/// House edges in local ids: a 4-cycle 0-1-2-3 plus apex 4 on the 0-1 side.
pub const HOUSE_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)];
const HOUSE_ROOF: [(usize, usize); 2] = [(0, 4), (1, 4)];
/// Local node that carries the edge to the base graph.
const HOUSE_ANCHOR: usize = 2;

pub fn generate_ba_shapes(cfg: &BaShapesConfig) -> Result<BaShapes> {
    if !(0.0..1.0).contains(&cfg.random_edge_frac) {
        return Err(Error::invalid("random_edge_frac must lie in [0, 1)"));
    }
    let base = barabasi_albert(cfg.n_base, cfg.m, cfg.seed)?;
    let n = cfg.n_base + 5 * cfg.n_motifs;
    let mut edges: Vec<(usize, usize)> = base.edges().map(|e| (e.0, e.1)).collect();
    let mut labels = vec![LABEL_BASE; n];
    let mut houses = Vec::with_capacity(cfg.n_motifs);
    let mut motif_edges = EdgeSet::new();
    let mut roof_edges = EdgeSet::new();
    let mut rng = rng_stream(cfg.seed, 1);
    for h in 0..cfg.n_motifs {
        let first = cfg.n_base + 5 * h;
        let ids = [first, first + 1, first + 2, first + 3, first + 4];
        for (a, b) in HOUSE_EDGES {
            edges.push((ids[a], ids[b]));
            motif_edges.insert(Edge::new(ids[a], ids[b]).expect("distinct"));
        }
        for (a, b) in HOUSE_ROOF {
            roof_edges.insert(Edge::new(ids[a], ids[b]).expect("distinct"));
        }
        labels[ids[0]] = LABEL_BOTTOM;
        labels[ids[1]] = LABEL_BOTTOM;
        labels[ids[2]] = LABEL_TOP;
        labels[ids[3]] = LABEL_TOP;
        labels[ids[4]] = LABEL_APEX;
        edges.push((ids[HOUSE_ANCHOR], rng.gen_range(0..cfg.n_base)));
        houses.push(ids);
    }
    let mut graph = Graph::from_edges(n, edges)?;
    let extra = (cfg.random_edge_frac * graph.edge_count() as f64).floor() as usize;
    let mut added = 0;
    while added < extra {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v && graph.insert_edge(u, v) {
            added += 1;
        }
    }
    Ok(BaShapes {
        graph: graph.with_labels(labels)?,
        houses,
        motif_edges,
        roof_edges,
    })
}

/// Reads `<dir>/<name>.edges` and keeps its largest connected component.
/// `dir` defaults to `$SUBDIFF_DATA_DIR`.
pub fn load_named(name: &str, dir: Option<&Path>) -> Result<Graph> {
    let dir: PathBuf = match dir {
        Some(d) => d.to_path_buf(),
        None => std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| {
                Error::Missing(format!(
                    "dataset {name:?}: set {DATA_DIR_ENV} to a directory containing {name}.edges"
                ))
            })?,
    };
    let path = dir.join(format!("{name}.edges"));
    if !path.is_file() {
        return Err(Error::Missing(format!(
            "dataset {name:?}: {} does not exist",
            path.display()
        )));
    }
    Ok(read_edge_list(&path)?.largest_connected_component().0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    /// Remove random edges; the edit task is expansion.
    Remove,
    /// Insert random non-edges; the edit task is denoising.
    Add,
    /// Remove motif edges.
    Motif,
    /// Insert non-edges inside motifs (house chords).
    MotifAdd,
}

impl CorruptionMode {
    pub fn removes(self) -> bool {
        matches!(self, CorruptionMode::Remove | CorruptionMode::Motif)
    }
}

impl std::str::FromStr for CorruptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(CorruptionMode::Remove),
            "add" => Ok(CorruptionMode::Add),
            "motif" => Ok(CorruptionMode::Motif),
            "motif-add" => Ok(CorruptionMode::MotifAdd),
            _ => Err(Error::invalid(format!(
                "unknown corruption mode {s:?} (expected remove, add, motif, motif-add)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    pub frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CorruptionResult {
    pub observed: Graph,
    pub target: Graph,
    /// `E_T \ E_O`.
    pub missing: EdgeSet,
    /// `E_O \ E_T`.
    pub added: EdgeSet,
}

/// Node groups inside which motif corruption operates.
#[derive(Debug, Clone, Default)]
pub struct Motifs {
    pub edges: EdgeSet,
    pub groups: Vec<Vec<usize>>,
}

impl From<&BaShapes> for Motifs {
    fn from(b: &BaShapes) -> Self {
        Motifs {
            edges: b.motif_edges.clone(),
            groups: b.houses.iter().map(|h| h.to_vec()).collect(),
        }
    }
}

pub fn corrupt(g: &Graph, spec: &CorruptionSpec, motifs: Option<&Motifs>) -> Result<CorruptionResult> {
    if !(spec.frac > 0.0 && spec.frac <= 0.5) {
        return Err(Error::invalid(format!(
            "corruption fraction must lie in (0, 0.5], got {}",
            spec.frac
        )));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected {
            components: g.components().1,
        });
    }
    let mut rng = rng_stream(spec.seed, 0);
    let mut observed = g.clone();
    let mut missing = EdgeSet::new();
    let mut added = EdgeSet::new();
    let need_motifs = || {
        motifs.ok_or_else(|| Error::invalid("motif corruption needs a graph with marked motifs"))
    };
    match spec.mode {
        CorruptionMode::Remove | CorruptionMode::Motif => {
            let pool: Vec<Edge> = if spec.mode == CorruptionMode::Remove {
                g.edges().collect()
            } else {
                need_motifs()?.edges.iter().copied().collect()
            };
            let target = (spec.frac * pool.len() as f64).floor() as usize;
            remove_connected(&mut observed, pool, target, &mut rng, &mut missing)?;
        }
        CorruptionMode::Add => {
            let n = g.n();
            let target = (spec.frac * g.edge_count() as f64).floor() as usize;
            let free = n * n.saturating_sub(1) / 2 - g.edge_count();
            if target > free {
                return Err(Error::CorruptionIncomplete {
                    achieved: 0,
                    requested: target,
                    rejected: 0,
                });
            }
            while added.len() < target {
                let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if u != v && observed.insert_edge(u, v) {
                    added.insert(Edge::new(u, v).expect("u != v"));
                }
            }
        }
        CorruptionMode::MotifAdd => {
            let m = need_motifs()?;
            let target = (spec.frac * m.edges.len() as f64).floor() as usize;
            let mut pool: Vec<Edge> = Vec::new();
            for group in &m.groups {
                for (i, &a) in group.iter().enumerate() {
                    for &b in &group[i + 1..] {
                        if !g.has_edge(a, b) {
                            pool.push(Edge::new(a, b).ok_or_else(|| Error::invalid("repeated node in motif"))?);
                        }
                    }
                }
            }
            pool.sort();
            pool.dedup();
            if target > pool.len() {
                return Err(Error::CorruptionIncomplete {
                    achieved: 0,
                    requested: target,
                    rejected: 0,
                });
            }
            pool.shuffle(&mut rng);
            for e in pool.into_iter().take(target) {
                observed.insert_edge(e.0, e.1);
                added.insert(e);
            }
        }
    }
    Ok(CorruptionResult {
        observed,
        target: g.clone(),
        missing,
        added,
    })
}

fn remove_connected(
    g: &mut Graph,
    mut pool: Vec<Edge>,
    target: usize,
    rng: &mut impl Rng,
    removed: &mut EdgeSet,
) -> Result<()> {
    let limit = 100 * g.edge_count();
    let mut rejected = 0;
    while removed.len() < target {
        if pool.is_empty() || rejected >= limit {
            return Err(Error::CorruptionIncomplete {
                achieved: removed.len(),
                requested: target,
                rejected,
            });
        }
        let i = rng.gen_range(0..pool.len());
        let e = pool[i];
        g.remove_edge(e.0, e.1);
        if g.is_connected() {
            removed.insert(e);
            pool.swap_remove(i);
        } else {
            g.insert_edge(e.0, e.1);
            rejected += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::graph::triangles_per_node;

    #[test]
    fn ba_edge_count() {
        for (n, m) in [(10, 1), (50, 3), (100, 5)] {
            let g = barabasi_albert(n, m, 4).unwrap();
            assert_eq!(g.edge_count(), m * (n - m));
            assert!(g.is_connected());
        }
        assert!(barabasi_albert(3, 3, 0).is_err());
    }

    #[test]
    fn ba_shapes_sizes() {
        let b = generate_ba_shapes(&BaShapesConfig::default()).unwrap();
        assert_eq!(b.graph.n(), 700);
        assert_eq!(b.graph.edge_count(), 5 * 295 + 7 * 80);
        assert_eq!(b.motif_edges.len(), 480);
        assert_eq!(b.roof_edges.len(), 160);
        assert!(b.graph.is_connected());
        let plain = generate_ba_shapes(&BaShapesConfig {
            n_motifs: 0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(plain.graph.n(), 300);
        assert_eq!(plain.graph.edge_count(), 5 * 295);
    }

    #[test]
    fn each_house_has_one_triangle() {
        let b = generate_ba_shapes(&BaShapesConfig {
            n_base: 30,
            m: 2,
            n_motifs: 4,
            random_edge_frac: 0.0,
            seed: 9,
        })
        .unwrap();
        for h in &b.houses {
            let s = b.graph.induced_subgraph(h);
            assert_eq!((s.n(), s.edge_count()), (5, 6));
            assert_eq!(triangles_per_node(&s).iter().sum::<u64>() / 3, 1);
            assert_eq!(s.labels().unwrap(), &[1, 1, 2, 2, 3]);
        }
    }

    fn spec(mode: CorruptionMode, frac: f64, seed: u64) -> CorruptionSpec {
        CorruptionSpec { mode, frac, seed }
    }

    #[test]
    fn k4_single_removal() {
        let r = corrupt(&complete(4), &spec(CorruptionMode::Remove, 0.25, 1), None).unwrap();
        assert_eq!(r.missing.len(), 1);
        assert!(r.added.is_empty());
        assert!(r.observed.is_connected());
    }

    #[test]
    fn zero_edit_count_is_identity() {
        let g = cycle(6);
        let r = corrupt(&g, &spec(CorruptionMode::Remove, 0.1, 1), None).unwrap();
        assert_eq!(r.observed, g);
        assert!(r.missing.is_empty() && r.added.is_empty());
    }

    #[test]
    fn tree_cannot_lose_edges() {
        let err = corrupt(&path(20), &spec(CorruptionMode::Remove, 0.2, 1), None).unwrap_err();
        assert!(matches!(err, Error::CorruptionIncomplete { achieved: 0, requested: 3, .. }));
    }

    #[test]
    fn frac_range_enforced() {
        let g = cycle(6);
        assert!(corrupt(&g, &spec(CorruptionMode::Add, 0.0, 1), None).is_err());
        assert!(corrupt(&g, &spec(CorruptionMode::Add, 0.6, 1), None).is_err());
    }

    #[test]
    fn motif_modes_touch_only_houses() {
        let b = generate_ba_shapes(&BaShapesConfig {
            n_base: 40,
            m: 3,
            n_motifs: 10,
            random_edge_frac: 0.0,
            seed: 2,
        })
        .unwrap();
        let motifs = Motifs::from(&b);
        let r = corrupt(&b.graph, &spec(CorruptionMode::Motif, 0.1, 5), Some(&motifs)).unwrap();
        assert_eq!(r.missing.len(), 6);
        assert!(r.missing.is_subset(&b.motif_edges));
        let r = corrupt(&b.graph, &spec(CorruptionMode::MotifAdd, 0.1, 5), Some(&motifs)).unwrap();
        assert_eq!(r.added.len(), 6);
        for e in &r.added {
            assert!(b.houses.iter().any(|h| h.contains(&e.0) && h.contains(&e.1)));
        }
        assert!(corrupt(&b.graph, &spec(CorruptionMode::Motif, 0.1, 5), None).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("motif-add".parse::<CorruptionMode>().unwrap(), CorruptionMode::MotifAdd);
        assert!("drop".parse::<CorruptionMode>().is_err());
    }
}
