//! Refinement metrics over a set of edited samples.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::edit::EditTask;
use crate::error::{Error, Result};
use crate::graph::{degree_alignment, Edge, EdgeSet, Graph};

fn check_nodes(samples: &[Graph], n: usize) -> Result<()> {
    match samples.iter().position(|g| g.n() != n) {
        Some(r) => Err(Error::Shape(format!(
            "sample {r} has {} nodes, expected {n}",
            samples[r].n()
        ))),
        None => Ok(()),
    }
}

/// Mean over the pairs of `edit_set` of the fraction of samples that agree
/// with `target` on that pair.
pub fn consensus(samples: &[Graph], edit_set: &EdgeSet, target: &Graph) -> Result<f64> {
    if edit_set.is_empty() {
        return Err(Error::invalid("consensus needs a non-empty edit set"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("consensus needs at least one sample"));
    }
    check_nodes(samples, target.n())?;
    let r = samples.len() as f64;
    let total: f64 = edit_set
        .iter()
        .map(|e| {
            let want = target.has_edge(e.0, e.1);
            samples.iter().filter(|g| g.has_edge(e.0, e.1) == want).count() as f64 / r
        })
        .sum();
    Ok(total / edit_set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    /// Fraction of ordered pairs of distinct samples with unequal edge sets.
    pub diversity: f64,
    /// Number of distinct edge sets divided by the sample count.
    pub distinct_fraction: f64,
}

pub fn diversity(samples: &[Graph]) -> Result<Diversity> {
    let r = samples.len();
    if r < 2 {
        return Err(Error::invalid(format!("diversity needs at least 2 samples, got {r}")));
    }
    let sets: Vec<EdgeSet> = samples.iter().map(Graph::edge_set).collect();
    let mut unequal = 0usize;
    for a in 0..r {
        for b in 0..r {
            if a != b && sets[a] != sets[b] {
                unequal += 1;
            }
        }
    }
    let distinct: BTreeSet<&EdgeSet> = sets.iter().collect();
    Ok(Diversity {
        diversity: unequal as f64 / (r * (r - 1)) as f64,
        distinct_fraction: distinct.len() as f64 / r as f64,
    })
}

/// Mean of `|E_r| / |E_T|`.
pub fn sparsity(samples: &[Graph], target_edges: usize) -> Result<f64> {
    if target_edges == 0 {
        return Err(Error::invalid("sparsity needs a target with at least one edge"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("sparsity needs at least one sample"));
    }
    let sum: f64 = samples
        .iter()
        .map(|g| g.edge_count() as f64 / target_edges as f64)
        .sum();
    Ok(sum / samples.len() as f64)
}

/// Documented sparsity range `[|E_O| / |E_T|, |V_O|^2 / |E_T|]`.
pub fn sparsity_range(observed: &Graph, target_edges: usize) -> (f64, f64) {
    let t = target_edges as f64;
    (observed.edge_count() as f64 / t, (observed.n() * observed.n()) as f64 / t)
}

fn aligned_edges(g: &Graph) -> EdgeSet {
    let rank = degree_alignment(g);
    g.edges().filter_map(|e| Edge::new(rank[e.0], rank[e.1])).collect()
}

fn overlap_counts(samples: &[Graph], observed: &Graph, aligned: bool) -> Result<Vec<usize>> {
    if samples.is_empty() {
        return Err(Error::invalid("edge overlap needs at least one sample"));
    }
    let obs = if aligned { aligned_edges(observed) } else { observed.edge_set() };
    Ok(samples
        .iter()
        .map(|g| {
            let s = if aligned { aligned_edges(g) } else { g.edge_set() };
            s.intersection(&obs).count()
        })
        .collect())
}

/// Mean of `|E_r ∩ E_O| / |E_O|`. With `aligned`, both sides are first
/// relabelled by [`degree_alignment`].
pub fn edge_overlap(samples: &[Graph], observed: &Graph, aligned: bool) -> Result<f64> {
    let m = observed.edge_count();
    if m == 0 {
        return Err(Error::invalid("edge overlap needs an observed graph with edges"));
    }
    let counts = overlap_counts(samples, observed, aligned)?;
    Ok(counts.iter().map(|&c| c as f64 / m as f64).sum::<f64>() / samples.len() as f64)
}

/// [`edge_overlap`] normalised by the target edge count instead.
pub fn edge_overlap_by_target(samples: &[Graph], observed: &Graph, target_edges: usize, aligned: bool) -> Result<f64> {
    if target_edges == 0 {
        return Err(Error::invalid("target has no edges"));
    }
    let counts = overlap_counts(samples, observed, aligned)?;
    Ok(counts.iter().map(|&c| c as f64 / target_edges as f64).sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: EditTask,
    pub rounds: usize,
    /// Absent when there is no edit set (style transfer).
    pub consensus: Option<f64>,
    /// Absent for a single sample.
    pub diversity: Option<f64>,
    pub distinct_fraction: f64,
    pub sparsity: f64,
    pub sparsity_range: (f64, f64),
    pub sparsity_in_range: bool,
    pub edge_overlap: f64,
    pub edge_overlap_by_target: f64,
    pub aligned: bool,
}

/// All metrics for one set of samples. `edit_set` is the missing edges for
/// expansion and the added edges for denoising.
pub fn evaluate(
    task: EditTask,
    samples: &[Graph],
    observed: &Graph,
    target: &Graph,
    edit_set: Option<&EdgeSet>,
    aligned: bool,
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    if !aligned {
        check_nodes(samples, observed.n())?;
    }
    let consensus = match edit_set {
        Some(set) if !set.is_empty() => Some(consensus(samples, set, target)?),
        _ => None,
    };
    let (diversity, distinct_fraction) = if samples.len() >= 2 {
        let d = diversity(samples)?;
        (Some(d.diversity), d.distinct_fraction)
    } else {
        (None, 1.0)
    };
    let te = target.edge_count();
    let sp = sparsity(samples, te)?;
    let range = sparsity_range(observed, te);
    Ok(MetricReport {
        task,
        rounds: samples.len(),
        consensus,
        diversity,
        distinct_fraction,
        sparsity: sp,
        sparsity_range: range,
        sparsity_in_range: sp >= range.0 - 1e-12 && sp <= range.1 + 1e-12,
        edge_overlap: edge_overlap(samples, observed, aligned)?,
        edge_overlap_by_target: edge_overlap_by_target(samples, observed, te, aligned)?,
        aligned,
    })
}
