//! Large-graph generation: sample many subgraphs from a trained model and
//! merge them on global-context identity.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::Rng;

use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::rng_stream;
use crate::subgraph::{row_key, Histograms};

/// Weight multiplier for context rows no generated subgraph has used yet.
pub const UNCOVERED_BIAS: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct StitchPlan {
    pub histograms: Histograms,
    /// L-infinity tolerance for identifying context rows; `0` is exact.
    pub epsilon_match: f64,
    /// Give up after this many iterations per context row.
    pub guard_factor: usize,
}

impl StitchPlan {
    pub fn new(histograms: Histograms) -> Self {
        StitchPlan {
            histograms,
            epsilon_match: 0.0,
            guard_factor: 50,
        }
    }
}

/// A merged graph; node `i` carries context row `rows[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalesced {
    pub graph: Graph,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchOutput {
    pub graph: Graph,
    pub rows: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Union of `pieces` with nodes identified by their context rows. Distinct
/// rows are numbered in ascending bit-pattern order, so the result does not
/// depend on the order of `pieces`. With `epsilon > 0` rows within that
/// L-infinity distance are identified; a row close to two rows that are not
/// close to each other is rejected.
pub fn coalesce(pieces: &[(&Graph, &Array2<f64>)], epsilon: f64) -> Result<Coalesced> {
    let mut width = None;
    // distinct rows -> first location
    let mut distinct: BTreeMap<Vec<u64>, (Vec<f64>, [usize; 2])> = BTreeMap::new();
    for (s, (g, c)) in pieces.iter().enumerate() {
        if c.nrows() != g.n() {
            return Err(Error::Shape(format!(
                "piece {s}: {} context rows for {} nodes",
                c.nrows(),
                g.n()
            )));
        }
        if *width.get_or_insert(c.ncols()) != c.ncols() {
            return Err(Error::Shape(format!("piece {s}: context width {} differs", c.ncols())));
        }
        for (r, row) in c.rows().into_iter().enumerate() {
            distinct
                .entry(row_key(row.iter().copied()))
                .or_insert_with(|| (row.to_vec(), [s, r]));
        }
    }
    let keys: Vec<Vec<u64>> = distinct.keys().cloned().collect();
    let rows: Vec<(Vec<f64>, [usize; 2])> = distinct.into_values().collect();

    // cluster[i] = id of the smallest row identified with row i
    let mut cluster: Vec<usize> = (0..rows.len()).collect();
    if epsilon > 0.0 {
        let near: Vec<Vec<usize>> = (0..rows.len())
            .map(|i| {
                (0..rows.len())
                    .filter(|&j| linf(&rows[i].0, &rows[j].0) <= epsilon)
                    .collect()
            })
            .collect();
        for (c, nb) in near.iter().enumerate() {
            for (x, &a) in nb.iter().enumerate() {
                for &b in &nb[x + 1..] {
                    if linf(&rows[a].0, &rows[b].0) > epsilon {
                        return Err(Error::AmbiguousMatch {
                            row: rows[c].1,
                            first: rows[a].1,
                            second: rows[b].1,
                        });
                    }
                }
            }
            // neighbourhoods are cliques, so the smallest member is canonical
            cluster[c] = nb[0];
        }
    }
    let mut ids = vec![usize::MAX; rows.len()];
    let mut reps = Vec::new();
    for i in 0..rows.len() {
        if ids[cluster[i]] == usize::MAX {
            ids[cluster[i]] = reps.len();
            reps.push(rows[cluster[i]].0.clone());
        }
        ids[i] = ids[cluster[i]];
    }

    let mut edges = BTreeSet::new();
    for (s, (g, c)) in pieces.iter().enumerate() {
        let local: Vec<usize> = c
            .rows()
            .into_iter()
            .map(|row| {
                let k = row_key(row.iter().copied());
                ids[keys.binary_search(&k).expect("collected above")]
            })
            .collect();
        for (r, &id) in local.iter().enumerate() {
            if let Some(q) = local[..r].iter().position(|&o| o == id) {
                return Err(Error::invalid(format!(
                    "piece {s}: context rows {q} and {r} are identified with each other"
                )));
            }
        }
        for e in g.edges() {
            edges.insert(Edge::new(local[e.0], local[e.1]).expect("distinct ids checked above"));
        }
    }
    Ok(Coalesced {
        graph: Graph::from_edge_set(reps.len(), &edges)?,
        rows: reps,
    })
}

fn weighted_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if u < *w {
                return i;
            }
            u -= w;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).expect("positive total weight")
}

/// Generates a graph with one node per distinct training context row.
/// Iteration `k` draws a size from the size histogram, that many distinct
/// context rows (weighted by count, unused rows boosted by
/// [`UNCOVERED_BIAS`]) and a subgraph conditioned on them, all from random
/// stream `k` of `seed`. Stops once every row has been used, then merges.
pub fn generate_large(model: &DiffusionModel, plan: &StitchPlan, seed: u64) -> Result<StitchOutput> {
    let hist = &plan.histograms;
    let n_rows = hist.rows.len();
    if n_rows < 2 || hist.sizes.is_empty() {
        return Err(Error::invalid("stitching needs at least two context rows and one subgraph size"));
    }
    let width = hist.rows[0].len();
    if width != model.denoiser.context_dim {
        return Err(Error::Shape(format!(
            "histogram rows have {width} columns, model expects {}",
            model.denoiser.context_dim
        )));
    }
    let sizes: Vec<usize> = hist.sizes.keys().copied().collect();
    let size_weights: Vec<f64> = hist.sizes.values().map(|&c| c as f64).collect();
    let mut covered = vec![false; n_rows];
    let mut uncovered = n_rows;
    let mut generated: Vec<(Graph, Array2<f64>)> = Vec::new();
    let guard = plan.guard_factor * n_rows;
    let mut iterations = 0;
    while uncovered > 0 {
        if iterations >= guard {
            return Err(Error::NonTermination { iterations, uncovered });
        }
        let mut rng = rng_stream(seed, iterations as u64);
        let n = sizes[weighted_index(&size_weights, &mut rng)].clamp(2, n_rows);
        let mut weights: Vec<f64> = hist
            .counts
            .iter()
            .zip(&covered)
            .map(|(&c, &cov)| c as f64 * if cov { 1.0 } else { UNCOVERED_BIAS })
            .collect();
        let mut chosen = Vec::with_capacity(n);
        for _ in 0..n {
            let i = weighted_index(&weights, &mut rng);
            weights[i] = 0.0;
            chosen.push(i);
        }
        chosen.sort_unstable();
        let context = Array2::from_shape_fn((n, width), |(r, k)| hist.rows[chosen[r]][k]);
        let state = model.reverse_sample(n, context.clone(), &mut rng)?;
        for &i in &chosen {
            if !covered[i] {
                covered[i] = true;
                uncovered -= 1;
            }
        }
        generated.push((state.graph().without_labels(), context));
        iterations += 1;
    }
    let pieces: Vec<(&Graph, &Array2<f64>)> = generated.iter().map(|(g, c)| (g, c)).collect();
    let merged = coalesce(&pieces, plan.epsilon_match)?;
    Ok(StitchOutput {
        graph: merged.graph,
        rows: merged.rows,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::barabasi_albert;
    use crate::diffusion::{train, TrainConfig};
    use crate::graph::generators::*;
    use crate::subgraph::{build_histograms, global_context, sample_ego_networks};

    /// Maps a coalesced graph back onto the ids of `g` through the context
    /// rows and returns its edge set.
    fn relabelled_edges(g: &Graph, ctx: &Array2<f64>, out: &Coalesced) -> crate::EdgeSet {
        let by_key: BTreeMap<Vec<u64>, usize> = ctx
            .rows()
            .into_iter()
            .enumerate()
            .map(|(v, r)| (row_key(r.iter().copied()), v))
            .collect();
        assert_eq!(by_key.len(), g.n());
        let back: Vec<usize> = out.rows.iter().map(|r| by_key[&row_key(r.iter().copied())]).collect();
        out.graph.edges().filter_map(|e| Edge::new(back[e.0], back[e.1])).collect()
    }

    fn reconstruct(g: &Graph, hops: usize) {
        let ctx = global_context(g, 2).unwrap();
        let egos = sample_ego_networks(g, &ctx, hops).unwrap();
        let pieces: Vec<_> = egos.iter().map(|s| (&s.graph, &s.context)).collect();
        let out = coalesce(&pieces, 0.0).unwrap();
        assert_eq!(out.graph.n(), g.n());
        assert_eq!(relabelled_edges(g, &ctx, &out), g.edge_set());
    }

    #[test]
    fn ego_networks_reassemble_the_graph() {
        for k in 1..=3 {
            reconstruct(&path(10), k);
            reconstruct(&complete(6), k);
            reconstruct(&barabasi_albert(100, 3, 7).unwrap(), k);
        }
    }

    fn rows(vals: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((vals.len(), 1), |(r, _)| vals[r])
    }

    #[test]
    fn shared_row_glues_triangle_and_path() {
        let tri = complete(3);
        let tri_c = rows(&[0.1, 0.2, 0.3]);
        let p = path(2);
        let p_c = rows(&[0.3, 0.4]);
        let out = coalesce(&[(&tri, &tri_c), (&p, &p_c)], 0.0).unwrap();
        assert_eq!(out.graph.n(), 4);
        assert_eq!(out.graph.edge_count(), 4);
        assert!(out.graph.has_edge(2, 3));
    }

    #[test]
    fn disjoint_rows_give_disjoint_union() {
        let a = complete(3);
        let b = path(3);
        let out = coalesce(&[(&a, &rows(&[1.0, 2.0, 3.0])), (&b, &rows(&[4.0, 5.0, 6.0]))], 0.0).unwrap();
        assert_eq!(out.graph.n(), 6);
        assert_eq!(out.graph.edge_count(), 5);
        assert_eq!(out.graph.components().1, 2);
    }

    #[test]
    fn copies_idempotence_and_order() {
        let g = barabasi_albert(30, 2, 1).unwrap();
        let ctx = global_context(&g, 2).unwrap();
        let single = coalesce(&[(&g, &ctx)], 0.0).unwrap();
        let twice = coalesce(&[(&g, &ctx), (&g, &ctx)], 0.0).unwrap();
        assert_eq!(single, twice);
        let again_ctx = Array2::from_shape_fn((single.rows.len(), ctx.ncols()), |(r, k)| single.rows[r][k]);
        assert_eq!(coalesce(&[(&single.graph, &again_ctx)], 0.0).unwrap(), single);

        let egos = sample_ego_networks(&g, &ctx, 1).unwrap();
        let mut pieces: Vec<_> = egos.iter().map(|s| (&s.graph, &s.context)).collect();
        let forward = coalesce(&pieces, 0.0).unwrap();
        pieces.reverse();
        assert_eq!(coalesce(&pieces, 0.0).unwrap(), forward);
    }

    #[test]
    fn epsilon_matching() {
        let a = path(2);
        let b = path(2);
        let ca = rows(&[0.0, 1.0]);
        let cb = rows(&[1.0 + 1e-9, 2.0]);
        let exact = coalesce(&[(&a, &ca), (&b, &cb)], 0.0).unwrap();
        assert_eq!(exact.graph.n(), 4);
        let loose = coalesce(&[(&a, &ca), (&b, &cb)], 1e-6).unwrap();
        assert_eq!(loose.graph.n(), 3);

        // 0.5 is close to both 0.0 and 1.0, which are not close to each other
        let c = Graph::empty(1);
        let mid = rows(&[0.5]);
        let err = coalesce(&[(&a, &ca), (&c, &mid)], 0.6).unwrap_err();
        assert!(matches!(err, Error::AmbiguousMatch { row: [1, 0], .. }));
    }

    #[test]
    fn rows_within_one_piece_must_stay_apart() {
        let a = path(2);
        assert!(coalesce(&[(&a, &rows(&[0.0, 1e-9]))], 1e-6).is_err());
    }

    fn small_model() -> (DiffusionModel, Histograms) {
        let g = barabasi_albert(24, 2, 3).unwrap();
        let ctx = global_context(&g, 2).unwrap();
        let egos = sample_ego_networks(&g, &ctx, 1).unwrap();
        let cfg = TrainConfig {
            t_max: 6,
            layers: 1,
            hidden: 8,
            steps: 4,
            n_max: 30,
            ..Default::default()
        };
        let model = train(&egos, &cfg).unwrap().model;
        let hist = build_histograms(&egos);
        (model, hist)
    }

    #[test]
    fn generated_graph_has_one_node_per_row() {
        let (model, hist) = small_model();
        let plan = StitchPlan::new(hist.clone());
        let out = generate_large(&model, &plan, 9).unwrap();
        assert_eq!(out.graph.n(), hist.rows.len());
        assert_eq!(out.rows, hist.rows);
        assert!(out.iterations >= 1);
        assert_eq!(generate_large(&model, &plan, 9).unwrap(), out);
    }

    #[test]
    fn guard_stops_generation() {
        let (model, hist) = small_model();
        let plan = StitchPlan {
            guard_factor: 0,
            ..StitchPlan::new(hist)
        };
        assert!(matches!(
            generate_large(&model, &plan, 0),
            Err(Error::NonTermination { iterations: 0, .. })
        ));
    }
}
