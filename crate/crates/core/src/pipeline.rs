//! End-to-end runs: dataset, corruption, subgraph sampling, training,
//! editing, optional stitching and evaluation, persisted to a run
//! directory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    barabasi_albert, corrupt, generate_ba_shapes, load_named, BaShapesConfig, CorruptionSpec, Motifs,
};
use crate::diffusion::{train, DiffusionModel, TrainConfig};
use crate::edit::{run_edit, train_regressor, EditRequest, EditTask, RegressorConfig, StyleAttr, StyleSpec};
use crate::error::{Error, Result};
use crate::graph::{
    graph_stats, read_edge_list, read_labels, write_atomic, write_edge_list, write_edge_set, EdgeSet,
    Graph, GraphStats,
};
use crate::metrics::{evaluate, MetricReport};
use crate::rng_stream;
use crate::stitch::{generate_large, StitchPlan};
use crate::subgraph::{global_context, sample_ego_networks, subsample, subsample_keeping, Subgraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// An edge-list file, reduced to its largest connected component.
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
    },
    /// `<dir>/<name>.edges`, `dir` defaulting to `$SUBDIFF_DATA_DIR`.
    Named {
        name: String,
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    BaShapes(BaShapesConfig),
    BarabasiAlbert { n: usize, m: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    pub hops: usize,
    pub n_max: usize,
    /// Eigenvector columns of the global context.
    pub context_dim: usize,
    pub seed: u64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            hops: 2,
            n_max: 50,
            context_dim: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleConfig {
    pub attr: StyleAttr,
    /// Target = attribute of the original subgraph + `delta`.
    pub delta: f64,
    pub lambda: f64,
    /// Number of training subgraphs to restyle.
    pub subgraphs: usize,
    pub regressor: RegressorConfig,
}

impl Default for StyleConfig {
    fn default() -> Self {
        StyleConfig {
            attr: StyleAttr::SumDegree,
            delta: 3.0,
            lambda: 100.0,
            subgraphs: 8,
            regressor: RegressorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EditSpec {
    /// Defaults to expansion after edge removal and denoising after edge
    /// insertion.
    pub task: Option<EditTask>,
    pub rounds: usize,
    pub seed: u64,
    /// Cap on the number of edit regions; `None` covers every edited pair.
    pub max_regions: Option<usize>,
    pub style: Option<StyleConfig>,
}

impl Default for EditSpec {
    fn default() -> Self {
        EditSpec {
            task: None,
            rounds: 10,
            seed: 0,
            max_regions: None,
            style: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StitchSpec {
    pub seed: u64,
    pub epsilon_match: f64,
}

impl Default for StitchSpec {
    fn default() -> Self {
        StitchSpec {
            seed: 0,
            epsilon_match: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub corruption: Option<CorruptionSpec>,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub diffusion: TrainConfig,
    #[serde(default)]
    pub edit: Option<EditSpec>,
    #[serde(default)]
    pub stitch: Option<StitchSpec>,
    /// Run directory; the command line may supply it instead.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.sampling.n_max != self.diffusion.n_max {
            return Err(Error::invalid(format!(
                "sampling.n_max ({}) and diffusion.n_max ({}) must agree",
                self.sampling.n_max, self.diffusion.n_max
            )));
        }
        if self.sampling.hops == 0 {
            return Err(Error::invalid("sampling.hops must be at least 1"));
        }
        if let Some(edit) = &self.edit {
            let task = self.edit_task(edit)?;
            if (task == EditTask::Style) != edit.style.is_some() {
                return Err(Error::invalid("edit.style must be given exactly when the task is style"));
            }
            if task != EditTask::Style && self.corruption.is_none() {
                return Err(Error::invalid("expansion and denoising need a corruption spec"));
            }
            if edit.rounds == 0 {
                return Err(Error::invalid("edit.rounds must be at least 1"));
            }
        }
        Ok(())
    }

    fn edit_task(&self, edit: &EditSpec) -> Result<EditTask> {
        match (edit.task, &self.corruption) {
            (Some(t), _) => Ok(t),
            (None, Some(c)) => Ok(if c.mode.removes() { EditTask::Expand } else { EditTask::Denoise }),
            (None, None) if edit.style.is_some() => Ok(EditTask::Style),
            (None, None) => Err(Error::invalid("edit.task is required without a corruption spec")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
}

impl From<&Graph> for GraphSummary {
    fn from(g: &Graph) -> Self {
        GraphSummary {
            nodes: g.n(),
            edges: g.edge_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub center: usize,
    pub nodes: usize,
    /// Edited pairs wholly inside the region.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleResult {
    pub center: usize,
    pub original: f64,
    pub target: f64,
    pub achieved: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub attr: StyleAttr,
    pub delta: f64,
    pub lambda: f64,
    /// Mean over subgraphs and samples of `|achieved - target|`.
    pub mean_abs_error: f64,
    /// The same distance for the unedited subgraphs, `|delta|`.
    pub baseline_abs_error: f64,
    pub results: Vec<StyleResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub task: EditTask,
    pub rounds: usize,
    pub regions: Vec<RegionSummary>,
    pub covered_pairs: usize,
    pub uncovered_pairs: usize,
    pub metrics: Option<MetricReport>,
    pub style: Option<StyleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    pub generated: GraphSummary,
    pub iterations: usize,
    /// Statistics of the largest connected component of the generated
    /// graph, with edge overlap against the observed graph.
    pub generated_stats: Option<GraphStats>,
    pub observed_stats: Option<GraphStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub target: GraphSummary,
    pub observed: GraphSummary,
    pub missing_edges: usize,
    pub added_edges: usize,
    pub context_dim: usize,
    pub subgraphs: usize,
    pub mean_subgraph_nodes: f64,
    pub training_steps: usize,
    pub final_loss: Option<f64>,
    pub edit: Option<EditReport>,
    pub stitch: Option<StitchReport>,
}

pub const REPORT_FILE: &str = "report.json";

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (k, l) in losses.iter().enumerate() {
        writeln!(text, "{k},{l}").expect("write to string");
    }
    write_atomic(path, text.as_bytes())
}

/// The clean graph and, for BA-Shapes, its motifs.
pub fn load_dataset(spec: &DatasetSpec) -> Result<(Graph, Option<Motifs>)> {
    match spec {
        DatasetSpec::EdgeList { path, labels } => {
            let mut g = read_edge_list(path)?;
            if let Some(lp) = labels {
                let l = read_labels(lp, g.n())?;
                g = g.with_labels(l)?;
            }
            Ok((g.largest_connected_component().0, None))
        }
        DatasetSpec::Named { name, dir } => Ok((load_named(name, dir.as_deref())?, None)),
        DatasetSpec::BaShapes(cfg) => {
            let b = generate_ba_shapes(cfg)?;
            let motifs = Motifs::from(&b);
            Ok((b.graph, Some(motifs)))
        }
        DatasetSpec::BarabasiAlbert { n, m, seed } => Ok((barabasi_albert(*n, *m, *seed)?, None)),
    }
}

/// Local subgraph around edited pairs, grown from `u`: the `hops`-ball of
/// `u` plus a shortest path to `v`, subsampled to `n_max` with the path
/// retained.
pub fn edit_region(
    observed: &Graph,
    context: &Array2<f64>,
    (u, v): (usize, usize),
    hops: usize,
    n_max: usize,
    rng: &mut impl Rng,
) -> Result<Option<Subgraph>> {
    let path = observed
        .shortest_path(u, v)
        .ok_or(Error::Disconnected {
            components: observed.components().1,
        })?;
    if path.len() > n_max {
        return Ok(None);
    }
    let mut nodes = observed.ball(u, hops);
    nodes.extend_from_slice(&path);
    let region = Subgraph::induced(observed, context, &nodes, u)?;
    let keep: Vec<usize> = path
        .iter()
        .map(|p| region.parent_ids.binary_search(p).expect("path included"))
        .collect();
    Ok(Some(subsample_keeping(&region, n_max, &keep, rng)?))
}

/// Result of editing a whole graph through local regions.
#[derive(Debug, Clone)]
pub struct GraphEdit {
    /// One merged graph per round.
    pub samples: Vec<Graph>,
    pub regions: Vec<Subgraph>,
    /// Edited pairs lying inside at least one region.
    pub covered: EdgeSet,
    pub uncovered: usize,
}

/// Expands or denoises `observed` around `pairs`: pairs are visited in
/// order, each one not yet inside a region seeds a new region
/// ([`edit_region`], random stream `k` of `edit.seed` for region `k`), every
/// region is edited for `edit.rounds` samples and the samples are merged
/// with [`merge_region_samples`].
pub fn edit_graph(
    model: &DiffusionModel,
    observed: &Graph,
    context: &Array2<f64>,
    pairs: &EdgeSet,
    task: EditTask,
    sampling: &SamplingSpec,
    edit: &EditSpec,
) -> Result<GraphEdit> {
    if task == EditTask::Style {
        return Err(Error::invalid("style transfer works on subgraphs, not whole graphs"));
    }
    let mut regions = Vec::new();
    let mut covered = EdgeSet::new();
    let mut skipped = EdgeSet::new();
    let mut outputs = Vec::new();
    for e in pairs {
        if covered.contains(e) || skipped.contains(e) {
            continue;
        }
        if edit.max_regions.is_some_and(|m| regions.len() >= m) {
            break;
        }
        let mut rng = rng_stream(edit.seed, regions.len() as u64);
        let Some(region) = edit_region(observed, context, (e.0, e.1), sampling.hops, sampling.n_max, &mut rng)?
        else {
            skipped.insert(*e);
            continue;
        };
        let inside: BTreeSet<usize> = region.parent_ids.iter().copied().collect();
        for p in pairs {
            if inside.contains(&p.0) && inside.contains(&p.1) {
                covered.insert(*p);
            }
        }
        let req = EditRequest {
            observed: region.clone(),
            task,
            rounds: edit.rounds,
            seed: rng.gen(),
            style: None,
        };
        outputs.push((region.clone(), run_edit(model, &req)?));
        regions.push(region);
    }
    Ok(GraphEdit {
        samples: merge_region_samples(observed, task, &outputs, edit.rounds),
        regions,
        uncovered: pairs.len() - covered.len(),
        covered,
    })
}

/// Applies region samples to the observed graph: sample `r` of the result
/// takes sample `r` of every region. Expansion adds the region's new edges;
/// denoising removes the observed edges the region dropped.
pub fn merge_region_samples(observed: &Graph, task: EditTask, regions: &[(Subgraph, Vec<Graph>)], rounds: usize) -> Vec<Graph> {
    (0..rounds)
        .map(|r| {
            let mut g = observed.clone().without_labels();
            for (region, samples) in regions {
                let ids = &region.parent_ids;
                let s = &samples[r];
                match task {
                    EditTask::Expand => {
                        for e in s.edges() {
                            g.insert_edge(ids[e.0], ids[e.1]);
                        }
                    }
                    EditTask::Denoise => {
                        for e in region.graph.edges() {
                            if !s.has_edge(e.0, e.1) {
                                g.remove_edge(ids[e.0], ids[e.1]);
                            }
                        }
                    }
                    EditTask::Style => {}
                }
            }
            g
        })
        .collect()
}

fn run_style(
    dir: &Path,
    model: &DiffusionModel,
    subs: &[Subgraph],
    edit: &EditSpec,
    style: &StyleConfig,
) -> Result<StyleReport> {
    let (regressor, losses) = train_regressor(subs, style.attr, &style.regressor, model)?;
    regressor.save(dir.join("regressor.json"))?;
    write_losses(&dir.join("regressor_losses.csv"), &losses)?;
    let count = style.subgraphs.min(subs.len());
    let mut results = Vec::with_capacity(count);
    let (mut err, mut samples) = (0.0, 0usize);
    for k in 0..count {
        let s = &subs[k * subs.len() / count];
        let original = style.attr.value(&s.graph);
        let target = original + style.delta;
        let req = EditRequest {
            observed: s.clone(),
            task: EditTask::Style,
            rounds: edit.rounds,
            seed: rng_stream(edit.seed, k as u64).gen(),
            style: Some(StyleSpec {
                target,
                lambda: style.lambda,
                regressor: regressor.clone(),
            }),
        };
        let outs = run_edit(model, &req)?;
        let sub_dir = dir.join("edits").join(format!("subgraph_{k:04}"));
        create_dir(&sub_dir)?;
        let mut achieved = Vec::with_capacity(outs.len());
        for (r, g) in outs.iter().enumerate() {
            write_edge_list(sub_dir.join(format!("sample_{r:02}.edges")), g)?;
            let a = style.attr.value(g);
            err += (a - target).abs();
            samples += 1;
            achieved.push(a);
        }
        results.push(StyleResult {
            center: s.parent_ids[s.center],
            original,
            target,
            achieved,
        });
    }
    Ok(StyleReport {
        attr: style.attr,
        delta: style.delta,
        lambda: style.lambda,
        mean_abs_error: if samples == 0 { 0.0 } else { err / samples as f64 },
        baseline_abs_error: style.delta.abs(),
        results,
    })
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    center: usize,
    parent_ids: &'a [usize],
}

/// Runs every configured stage and writes the run directory. `out_dir`
/// overrides the configured directory.
pub fn run_pipeline(config: &RunConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    stage("config", config.validate())?;
    let dir: PathBuf = match (out_dir, &config.out_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => d.clone(),
        (None, None) => return Err(Error::invalid("no output directory configured")),
    };
    stage("config", create_dir(&dir))?;
    stage("config", write_json(&dir.join("config.json"), config))?;

    let (target, motifs) = stage("dataset", load_dataset(&config.dataset))?;
    stage("dataset", write_edge_list(dir.join("target.edges"), &target))?;

    let (observed, missing, added) = match &config.corruption {
        Some(spec) => {
            let c = stage("corrupt", corrupt(&target, spec, motifs.as_ref()))?;
            (c.observed, c.missing, c.added)
        }
        None => (target.clone(), EdgeSet::new(), EdgeSet::new()),
    };
    stage("corrupt", (|| {
        write_edge_list(dir.join("observed.edges"), &observed)?;
        write_edge_set(dir.join("missing.edges"), observed.n(), &missing)?;
        write_edge_set(dir.join("added.edges"), observed.n(), &added)
    })())?;

    let sampling = &config.sampling;
    let (context, subs) = stage("sample", (|| {
        let context = global_context(&observed, sampling.context_dim)?;
        let subs = sample_ego_networks(&observed, &context, sampling.hops)?
            .iter()
            .map(|s| subsample(s, sampling.n_max, sampling.seed))
            .collect::<Result<Vec<_>>>()?;
        let samples_dir = dir.join("samples");
        create_dir(&samples_dir)?;
        let manifest: Vec<ManifestEntry> = subs
            .iter()
            .map(|s| ManifestEntry {
                center: s.parent_ids[s.center],
                parent_ids: &s.parent_ids,
            })
            .collect();
        write_json(&samples_dir.join("manifest.json"), &manifest)?;
        Ok((context, subs))
    })())?;

    let trained = stage("train", train(&subs, &config.diffusion))?;
    let model = trained.model;
    stage("train", (|| {
        model.save(dir.join("checkpoint.json"))?;
        write_losses(&dir.join("losses.csv"), &trained.losses)
    })())?;

    let edit = match &config.edit {
        None => None,
        Some(spec) => Some(stage("edit", (|| {
            let task = config.edit_task(spec)?;
            let edits_dir = dir.join("edits");
            create_dir(&edits_dir)?;
            if let (EditTask::Style, Some(style)) = (task, &spec.style) {
                let report = run_style(&dir, &model, &subs, spec, style)?;
                return Ok(EditReport {
                    task,
                    rounds: spec.rounds,
                    regions: Vec::new(),
                    covered_pairs: 0,
                    uncovered_pairs: 0,
                    metrics: None,
                    style: Some(report),
                });
            }
            let pairs = if task == EditTask::Expand { &missing } else { &added };
            let edited = edit_graph(&model, &observed, &context, pairs, task, sampling, spec)?;
            for (r, g) in edited.samples.iter().enumerate() {
                write_edge_list(edits_dir.join(format!("sample_{r:02}.edges")), g)?;
            }
            let summaries: Vec<RegionSummary> = edited
                .regions
                .iter()
                .map(|s| {
                    let inside: BTreeSet<usize> = s.parent_ids.iter().copied().collect();
                    RegionSummary {
                        center: s.parent_ids[s.center],
                        nodes: s.n(),
                        pairs: pairs
                            .iter()
                            .filter(|p| inside.contains(&p.0) && inside.contains(&p.1))
                            .count(),
                    }
                })
                .collect();
            write_json(&edits_dir.join("regions.json"), &summaries)?;
            let metrics = if edited.covered.is_empty() {
                None
            } else {
                let plain = observed.clone().without_labels();
                Some(evaluate(task, &edited.samples, &plain, &target, Some(&edited.covered), false)?)
            };
            Ok(EditReport {
                task,
                rounds: spec.rounds,
                regions: summaries,
                covered_pairs: edited.covered.len(),
                uncovered_pairs: edited.uncovered,
                metrics,
                style: None,
            })
        })())?),
    };

    let stitch = match &config.stitch {
        None => None,
        Some(spec) => Some(stage("stitch", (|| {
            let plan = StitchPlan {
                epsilon_match: spec.epsilon_match,
                ..StitchPlan::new(model.histograms.clone())
            };
            let out = generate_large(&model, &plan, spec.seed)?;
            write_edge_list(dir.join("generated.edges"), &out.graph)?;
            let lcc = out.graph.largest_connected_component().0;
            let plain = observed.clone().without_labels();
            Ok(StitchReport {
                generated: GraphSummary::from(&out.graph),
                iterations: out.iterations,
                generated_stats: graph_stats(&lcc, Some(&plain)).ok(),
                observed_stats: graph_stats(&plain, None).ok(),
            })
        })())?),
    };

    let report = RunReport {
        config: config.clone(),
        target: GraphSummary::from(&target),
        observed: GraphSummary::from(&observed),
        missing_edges: missing.len(),
        added_edges: added.len(),
        context_dim: context.ncols(),
        subgraphs: subs.len(),
        mean_subgraph_nodes: subs.iter().map(|s| s.n() as f64).sum::<f64>() / subs.len() as f64,
        training_steps: trained.losses.len(),
        final_loss: trained.losses.last().copied(),
        edit,
        stitch,
    };
    stage("report", write_json(&dir.join(REPORT_FILE), &report))?;
    Ok(report)
}

/// Metric columns written by [`emit_plot_data`].
pub const PLOT_METRICS: [&str; 4] = ["consensus", "diversity", "sparsity", "edge_overlap"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `<metric>.csv` (`run,value`, one row per run sorted by run id)
/// into `out` for every run under `root`. `root` is either one run
/// directory or a directory of run directories.
pub fn emit_plot_data(root: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let mut runs: Vec<(String, PathBuf)> = Vec::new();
    let run_id = |p: &Path| {
        p.file_name()
            .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
    };
    if root.join(REPORT_FILE).is_file() {
        runs.push((run_id(root), root.join(REPORT_FILE)));
    } else if root.is_dir() {
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let report = entry.path().join(REPORT_FILE);
            if report.is_file() {
                runs.push((run_id(&entry.path()), report));
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::Missing(format!(
            "no runs found: expected {} or {}",
            root.join(REPORT_FILE).display(),
            root.join("<run>").join(REPORT_FILE).display()
        )));
    }
    runs.sort();
    let mut rows: Vec<[Option<f64>; 4]> = Vec::with_capacity(runs.len());
    for (_, path) in &runs {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: RunReport = serde_json::from_str(&text)?;
        let m = report.edit.and_then(|e| e.metrics);
        rows.push(match m {
            Some(m) => [m.consensus, m.diversity, Some(m.sparsity), Some(m.edge_overlap)],
            None => [None; 4],
        });
    }
    create_dir(out)?;
    let mut written = Vec::with_capacity(PLOT_METRICS.len());
    for (k, name) in PLOT_METRICS.iter().enumerate() {
        let mut text = String::from("run,value\n");
        for ((id, _), row) in runs.iter().zip(&rows) {
            writeln!(text, "{id},{}", fmt_opt(row[k])).expect("write to string");
        }
        let path = out.join(format!("{name}.csv"));
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
