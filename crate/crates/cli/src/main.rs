//! `subdiff`: batch driver for subgraph diffusion refinement.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use subdiff::datasets::{corrupt, CorruptionMode, CorruptionSpec};
use subdiff::diffusion::{train, DiffusionModel, TrainConfig, TransitionKind};
use subdiff::edit::{
    run_edit, train_regressor, EditRequest, EditTask, Regressor, RegressorArch, RegressorConfig, StyleAttr, StyleSpec,
};
use subdiff::graph::{
    graph_stats, read_edge_list, read_edge_set, read_labels, write_atomic, write_edge_list, write_edge_set,
};
use subdiff::metrics::evaluate;
use subdiff::pipeline::{emit_plot_data, run_pipeline, RunConfig};
use subdiff::stitch::{generate_large, StitchPlan};
use subdiff::subgraph::{global_context, sample_ego_networks, subsample, Subgraph};
use subdiff::{EdgeSet, Graph};

/// Environment variable naming the root under which commands place their
/// output when `--out` is not given.
const OUT_ROOT_ENV: &str = "SUBDIFF_OUT_ROOT";

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Refine a noisy network with subgraph diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt a clean graph by removing or inserting edges.
    Corrupt(CorruptArgs),
    /// Cut a graph into size-capped ego networks.
    Sample(SampleArgs),
    /// Train a denoiser on sampled subgraphs.
    Train(TrainArgs),
    /// Train a time-dependent attribute regressor for style transfer.
    TrainRegressor(TrainRegressorArgs),
    /// Expand, denoise or restyle one subgraph.
    Edit(EditArgs),
    /// Generate a large graph from a trained model.
    Stitch(StitchArgs),
    /// Score edited samples against the clean graph.
    Eval(EvalArgs),
    /// Print whole-graph statistics.
    Stats(StatsArgs),
    /// Run every stage from a JSON config.
    Pipeline(PipelineArgs),
    /// Collect per-metric CSVs from run directories.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    /// Optional `node_id,label` file.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_parser = parse_via::<CorruptionMode>)]
    mode: CorruptionMode,
    #[arg(long)]
    frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long = "nmax", default_value_t = 50)]
    n_max: usize,
    /// Eigenvector columns of the global context.
    #[arg(long, default_value_t = 2)]
    context_dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `subdiff sample`.
    #[arg(long)]
    samples: PathBuf,
    /// JSON training config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_parser = parse_via::<TransitionKind>)]
    transition: Option<TransitionKind>,
    #[arg(long)]
    use_labels: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path; the loss log goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainRegressorArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = parse_via::<StyleAttr>)]
    attr: StyleAttr,
    #[arg(long, value_parser = parse_via::<RegressorArch>, default_value = "mp")]
    arch: RegressorArch,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long, value_parser = parse_via::<EditTask>)]
    task: EditTask,
    /// Subgraph edge list written by `subdiff sample`.
    #[arg(long)]
    subgraph: PathBuf,
    /// Context sidecar; defaults to the one next to `--subgraph`.
    #[arg(long)]
    context: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_via::<StyleAttr>)]
    attr: Option<StyleAttr>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long)]
    regressor: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StitchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// L-infinity tolerance for identifying context rows.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Graph to compare the generated statistics with.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Generated edge list; statistics go to `<out>.stats.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of sample edge lists.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    observed: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Missing edges (expansion) or added edges (denoising).
    #[arg(long)]
    edit_set: Option<PathBuf>,
    /// Inferred from the edit set when omitted.
    #[arg(long, value_parser = parse_via::<EditTask>)]
    task: Option<EditTask>,
    /// Relabel by degree before measuring edge overlap.
    #[arg(long)]
    aligned: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Keep only the largest connected component first.
    #[arg(long)]
    lcc: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// A run directory or a directory of run directories.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_via<T>(s: &str) -> std::result::Result<T, String>
where
    T: std::str::FromStr<Err = subdiff::Error>,
{
    s.parse().map_err(|e: subdiff::Error| e.to_string())
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn out_or(out: Option<PathBuf>, default: &str) -> PathBuf {
    out.unwrap_or_else(|| out_root().join(default))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_graph(path: &Path, labels: Option<&Path>) -> Result<Graph> {
    let g = read_edge_list(path)?;
    Ok(match labels {
        Some(l) => {
            let labels = read_labels(l, g.n())?;
            g.with_labels(labels)?
        }
        None => g,
    })
}

/// Per-subgraph sidecar written next to each sampled edge list.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextFile {
    center: usize,
    parent_ids: Vec<usize>,
    #[serde(default)]
    labels: Option<Vec<usize>>,
    context: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleManifest {
    source: PathBuf,
    hops: usize,
    n_max: usize,
    context_dim: usize,
    seed: u64,
    subgraphs: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    edges: String,
    context: String,
    center: usize,
    nodes: usize,
}

const MANIFEST: &str = "manifest.json";

fn sidecar_path(edges: &Path) -> PathBuf {
    edges.with_extension("context.json")
}

fn load_subgraph(edges: &Path, context: &Path) -> Result<Subgraph> {
    let side: ContextFile = read_json(context)?;
    let n = side.parent_ids.len();
    let mut g = read_edge_list(edges)?;
    if g.n() > n {
        bail!("{} has {} nodes but its sidecar lists {n}", edges.display(), g.n());
    }
    if g.n() < n {
        g = Graph::from_edges(n, g.edges().map(|e| (e.0, e.1)))?;
    }
    if let Some(l) = side.labels {
        g = g.with_labels(l)?;
    }
    let width = side.context.first().map_or(0, Vec::len);
    if side.context.len() != n || side.context.iter().any(|r| r.len() != width) {
        bail!("{}: context must have one row per node of equal width", context.display());
    }
    let context = Array2::from_shape_fn((n, width), |(r, k)| side.context[r][k]);
    if side.center >= n {
        bail!("{}: center {} out of range", edges.display(), side.center);
    }
    Ok(Subgraph {
        parent_ids: side.parent_ids,
        center: side.center,
        graph: g,
        context,
    })
}

fn load_samples(dir: &Path) -> Result<Vec<Subgraph>> {
    let manifest: SampleManifest = read_json(&dir.join(MANIFEST))?;
    manifest
        .subgraphs
        .iter()
        .map(|e| load_subgraph(&dir.join(&e.edges), &dir.join(&e.context)))
        .collect()
}

fn cmd_corrupt(a: CorruptArgs) -> Result<()> {
    let g = read_graph(&a.input, a.labels.as_deref())?;
    let spec = CorruptionSpec {
        mode: a.mode,
        frac: a.frac,
        seed: a.seed,
    };
    let res = corrupt(&g, &spec, None)?;
    let out = out_or(a.out, "corrupt");
    create_dir(&out)?;
    write_edge_list(out.join("observed.edges"), &res.observed)?;
    write_edge_list(out.join("target.edges"), &res.target)?;
    write_edge_set(out.join("missing.edges"), g.n(), &res.missing)?;
    write_edge_set(out.join("added.edges"), g.n(), &res.added)?;
    println!(
        "{}: {} edges observed, {} missing, {} added",
        out.display(),
        res.observed.edge_count(),
        res.missing.len(),
        res.added.len()
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let g = read_graph(&a.input, a.labels.as_deref())?;
    let context = global_context(&g, a.context_dim)?;
    let egos = sample_ego_networks(&g, &context, a.hops)?;
    let out = out_or(a.out, "samples");
    create_dir(&out)?;
    let mut entries = Vec::with_capacity(egos.len());
    for ego in &egos {
        let s = subsample(ego, a.n_max, a.seed)?;
        let center = s.parent_ids[s.center];
        let edges = format!("subgraph_{center:05}.edges");
        let side = sidecar_path(Path::new(&edges)).display().to_string();
        write_edge_list(out.join(&edges), &s.graph)?;
        write_json(
            &out.join(&side),
            &ContextFile {
                center: s.center,
                parent_ids: s.parent_ids.clone(),
                labels: s.graph.labels().map(<[usize]>::to_vec),
                context: s.context.rows().into_iter().map(|r| r.to_vec()).collect(),
            },
        )?;
        entries.push(ManifestEntry {
            edges,
            context: side,
            center,
            nodes: s.n(),
        });
    }
    write_json(
        &out.join(MANIFEST),
        &SampleManifest {
            source: a.input,
            hops: a.hops,
            n_max: a.n_max,
            context_dim: context.ncols(),
            seed: a.seed,
            subgraphs: entries,
        },
    )?;
    println!("{}: {} subgraphs", out.display(), egos.len());
    Ok(())
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (k, l) in losses.iter().enumerate() {
        text.push_str(&format!("{k},{l}\n"));
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    let manifest: SampleManifest = read_json(&a.samples.join(MANIFEST))?;
    if a.config.is_none() {
        cfg.n_max = manifest.n_max;
    }
    cfg.steps = a.steps.unwrap_or(cfg.steps);
    cfg.t_max = a.t_max.unwrap_or(cfg.t_max);
    cfg.layers = a.layers.unwrap_or(cfg.layers);
    cfg.hidden = a.hidden.unwrap_or(cfg.hidden);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.transition = a.transition.unwrap_or(cfg.transition);
    cfg.use_labels |= a.use_labels;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let subs = load_samples(&a.samples)?;
    let out = train(&subs, &cfg)?;
    let path = out_or(a.out, "checkpoint.json");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    out.model.save(&path)?;
    write_losses(&path.with_extension("losses.csv"), &out.losses)?;
    println!(
        "{}: {} steps, final loss {}",
        path.display(),
        out.losses.len(),
        out.losses.last().map_or_else(|| "n/a".into(), |l| format!("{l:.6}"))
    );
    Ok(())
}

fn cmd_train_regressor(a: TrainRegressorArgs) -> Result<()> {
    let model = DiffusionModel::load(&a.model)?;
    let subs = load_samples(&a.samples)?;
    let cfg = RegressorConfig {
        arch: a.arch,
        layers: a.layers,
        hidden: a.hidden,
        steps: a.steps,
        lr: a.lr,
        seed: a.seed,
        ..Default::default()
    };
    let (reg, losses) = train_regressor(&subs, a.attr, &cfg, &model)?;
    let path = out_or(a.out, "regressor.json");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    reg.save(&path)?;
    write_losses(&path.with_extension("losses.csv"), &losses)?;
    println!("{}: {} steps", path.display(), losses.len());
    Ok(())
}

fn cmd_edit(a: EditArgs) -> Result<()> {
    let model = DiffusionModel::load(&a.model)?;
    let context = a.context.unwrap_or_else(|| sidecar_path(&a.subgraph));
    let observed = load_subgraph(&a.subgraph, &context)?;
    let style = match a.task {
        EditTask::Style => {
            let (Some(target), Some(reg_path)) = (a.target, &a.regressor) else {
                bail!("--task style needs --target and --regressor");
            };
            let regressor = Regressor::load(reg_path)?;
            if let Some(attr) = a.attr {
                if attr != regressor.attr {
                    bail!("regressor predicts {:?}, not {attr:?}", regressor.attr);
                }
            }
            Some(StyleSpec {
                target,
                lambda: a.lambda,
                regressor,
            })
        }
        _ => {
            if a.target.is_some() || a.regressor.is_some() || a.attr.is_some() {
                bail!("--attr, --target and --regressor only apply to --task style");
            }
            None
        }
    };
    let req = EditRequest {
        observed,
        task: a.task,
        rounds: a.rounds,
        seed: a.seed,
        style,
    };
    let samples = run_edit(&model, &req)?;
    let out = out_or(a.out, "edits");
    create_dir(&out)?;
    for (r, g) in samples.iter().enumerate() {
        write_edge_list(out.join(format!("sample_{r:02}.edges")), g)?;
    }
    println!("{}: {} samples", out.display(), samples.len());
    Ok(())
}

#[derive(Serialize)]
struct StitchStats {
    nodes: usize,
    edges: usize,
    iterations: usize,
    /// Statistics of the largest connected component.
    generated: Option<subdiff::graph::GraphStats>,
    reference: Option<subdiff::graph::GraphStats>,
}

fn cmd_stitch(a: StitchArgs) -> Result<()> {
    let model = DiffusionModel::load(&a.model)?;
    let plan = StitchPlan {
        epsilon_match: a.epsilon,
        ..StitchPlan::new(model.histograms.clone())
    };
    let out = generate_large(&model, &plan, a.seed)?;
    let path = out_or(a.out, "generated.edges");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_edge_list(&path, &out.graph)?;
    let reference = a.reference.as_deref().map(read_edge_list).transpose()?;
    let lcc = out.graph.largest_connected_component().0;
    let stats = StitchStats {
        nodes: out.graph.n(),
        edges: out.graph.edge_count(),
        iterations: out.iterations,
        generated: graph_stats(&lcc, reference.as_ref()).ok(),
        reference: reference.as_ref().and_then(|r| graph_stats(r, None).ok()),
    };
    write_json(&path.with_extension("stats.json"), &stats)?;
    println!(
        "{}: {} nodes, {} edges after {} iterations",
        path.display(),
        stats.nodes,
        stats.edges,
        stats.iterations
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    samples: PathBuf,
    observed: PathBuf,
    target: PathBuf,
    edit_set: Option<PathBuf>,
    rounds: usize,
    #[serde(flatten)]
    metrics: subdiff::metrics::MetricReport,
}

fn edge_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "edges"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .edges files in {}", dir.display());
    }
    Ok(files)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let observed = read_edge_list(&a.observed)?;
    let target = read_edge_list(&a.target)?;
    let n = observed.n().max(target.n());
    let pad = |g: Graph| -> Result<Graph> {
        Ok(if g.n() < n {
            Graph::from_edges(n, g.edges().map(|e| (e.0, e.1)))?
        } else {
            g
        })
    };
    let observed = pad(observed)?;
    let target = pad(target)?;
    let samples = edge_files(&a.samples)?
        .iter()
        .map(|p| pad(read_edge_list(p)?))
        .collect::<Result<Vec<_>>>()?;
    let edit_set: Option<EdgeSet> = a.edit_set.as_deref().map(read_edge_set).transpose()?;
    let task = match (a.task, &edit_set) {
        (Some(t), _) => t,
        (None, Some(set)) if set.iter().all(|e| target.has_edge(e.0, e.1)) => EditTask::Expand,
        (None, Some(_)) => EditTask::Denoise,
        (None, None) => bail!("give --task when there is no --edit-set"),
    };
    let metrics = evaluate(task, &samples, &observed, &target, edit_set.as_ref(), a.aligned)?;
    let report = EvalReport {
        samples: a.samples,
        observed: a.observed,
        target: a.target,
        edit_set: a.edit_set,
        rounds: samples.len(),
        metrics,
    };
    let path = out_or(a.out, "report.json");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&path, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let mut g = read_edge_list(&a.input)?;
    if a.lcc {
        g = g.largest_connected_component().0;
    }
    let reference = a.reference.as_deref().map(read_edge_list).transpose()?;
    let stats = graph_stats(&g, reference.as_ref())?;
    let text = serde_json::to_string_pretty(&stats)?;
    match a.out {
        Some(p) => write_atomic(&p, format!("{text}\n").as_bytes())?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let out = match (a.out, &cfg.out_dir) {
        (Some(o), _) => o,
        (None, Some(o)) => o.clone(),
        (None, None) => {
            let stem = a.config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
            out_root().join(stem)
        }
    };
    let report = run_pipeline(&cfg, Some(&out))?;
    println!("{}: report written", out.join(subdiff::pipeline::REPORT_FILE).display());
    if let Some(m) = report.edit.and_then(|e| e.metrics) {
        println!("{}", serde_json::to_string_pretty(&m)?);
    }
    Ok(())
}

fn cmd_plot_data(a: PlotDataArgs) -> Result<()> {
    let out = a.out.unwrap_or_else(|| a.runs.join("plots"));
    for p in emit_plot_data(&a.runs, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::TrainRegressor(a) => cmd_train_regressor(a),
        Command::Edit(a) => cmd_edit(a),
        Command::Stitch(a) => cmd_stitch(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::PlotData(a) => cmd_plot_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
