//! Discrete denoising diffusion over the edges (and optionally the node
//! labels) of small graphs.

mod denoiser;
mod process;
mod train;

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use denoiser::{
    denoiser_apply, edge_one_hot, forward as denoiser_forward, init_params, loss as denoiser_loss, off_diagonal,
    softmax_rows, time_embedding, DenoiserConfig, DenoiserInput, DenoiserOutput, TIME_FREQS,
};
pub use process::{draw, kernel_row, posterior, NoiseSchedule, Transition, TransitionKind};
pub use train::{eval_loss, train, TrainConfig, TrainOutput};

use crate::error::{Error, Result};
use crate::graph::{write_atomic, Graph};
use crate::nn::{ParamStore, StoredTensor};
use crate::subgraph::Histograms;

/// A noisy graph at step `t` with its fixed conditioning rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub t: usize,
    pub n: usize,
    /// Row-major symmetric 0/1 adjacency with zero diagonal.
    pub adj: Vec<u8>,
    pub labels: Option<Vec<usize>>,
    /// `n x d` global-context rows.
    pub context: Array2<f64>,
}

impl DiffusionState {
    pub fn from_graph(g: &Graph, context: Array2<f64>, t: usize) -> Self {
        DiffusionState {
            t,
            n: g.n(),
            adj: g.dense_adjacency(),
            labels: g.labels().map(<[usize]>::to_vec),
            context,
        }
    }

    pub fn graph(&self) -> Graph {
        let g = Graph::from_dense_adjacency(self.n, &self.adj);
        match &self.labels {
            Some(l) => g.with_labels(l.clone()).expect("one label per node"),
            None => g,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        let v = u8::from(present);
        self.adj[i * self.n + j] = v;
        self.adj[j * self.n + i] = v;
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&a| a != 0).count() / 2
    }
}

/// Draws the noisy state at step `t` from the clean state `s0`: every
/// unordered pair (and every label) independently from row `s0` of
/// `Qbar_t`.
pub fn forward_sample(
    s0: &DiffusionState,
    t: usize,
    schedule: &NoiseSchedule,
    transition: &Transition,
    rng: &mut impl Rng,
) -> DiffusionState {
    let ab = schedule.alpha_bar(t);
    let mut out = s0.clone();
    out.t = t;
    let n = s0.n;
    let rows = [
        kernel_row(ab, &transition.m_edge, 0),
        kernel_row(ab, &transition.m_edge, 1),
    ];
    for i in 0..n {
        for j in i + 1..n {
            let e0 = usize::from(s0.has_edge(i, j));
            out.set_edge(i, j, draw(&rows[e0], rng) == 1);
        }
    }
    if let (Some(labels), false) = (&mut out.labels, transition.m_node.is_empty()) {
        for l in labels.iter_mut() {
            *l = draw(&kernel_row(ab, &transition.m_node, *l), rng);
        }
    }
    out
}

/// A trained denoiser with everything needed to sample from it.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub config: TrainConfig,
    pub denoiser: DenoiserConfig,
    pub schedule: NoiseSchedule,
    pub transition: Transition,
    pub params: ParamStore,
    pub histograms: Histograms,
}

/// Per-pair (`n^2 x 2`) and per-node distributions of the next state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    /// Row `i * n + j` is the distribution of pair `(i, j)`; diagonal rows
    /// are zero.
    pub edges: Array2<f64>,
    pub nodes: Option<Array2<f64>>,
}

/// Hooks into each reverse step; the edit tasks are built from these.
pub trait ReverseHook {
    /// May reshape the per-pair distributions before sampling. `state` is
    /// the state at step `state.t`.
    fn reweight(&mut self, _state: &DiffusionState, _dist: &mut StepDistribution) -> Result<()> {
        Ok(())
    }

    /// Runs on every freshly sampled state (step `state.t`).
    fn constrain(&mut self, _state: &mut DiffusionState) -> Result<()> {
        Ok(())
    }
}

/// Unconditional sampling.
pub struct NoHook;

impl ReverseHook for NoHook {}

impl DiffusionModel {
    pub fn t_max(&self) -> usize {
        self.schedule.t_max()
    }

    /// Unguided posterior `p(s_{t-1} | s_t)` at the state's step `t >= 1`.
    pub fn step_distribution(&self, state: &DiffusionState) -> Result<StepDistribution> {
        let t = state.t;
        if t == 0 || t > self.t_max() {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.t_max())));
        }
        let (edge_logits, node_logits) = denoiser_apply(&self.params, &self.denoiser, state, self.t_max())?;
        let alpha = self.schedule.alpha(t);
        let ab_prev = self.schedule.alpha_bar(t - 1);
        let n = state.n;
        let p_hat = softmax_rows(&edge_logits);
        let mut edges = Array2::zeros((n * n, 2));
        for i in 0..n {
            for j in i + 1..n {
                let r = i * n + j;
                let row = [p_hat[(r, 0)], p_hat[(r, 1)]];
                let e_t = usize::from(state.has_edge(i, j));
                let p = posterior(&row, e_t, alpha, ab_prev, &self.transition.m_edge, r)?;
                for k in 0..2 {
                    edges[(r, k)] = p[k];
                    edges[(j * n + i, k)] = p[k];
                }
            }
        }
        let nodes = match (node_logits, &state.labels) {
            (Some(logits), Some(labels)) => {
                let p_hat = softmax_rows(&logits);
                let mut out = Array2::zeros(p_hat.raw_dim());
                for v in 0..n {
                    let row: Vec<f64> = p_hat.row(v).to_vec();
                    let p = posterior(&row, labels[v], alpha, ab_prev, &self.transition.m_node, v)?;
                    out.row_mut(v).assign(&ndarray::Array1::from(p));
                }
                Some(out)
            }
            _ => None,
        };
        Ok(StepDistribution { edges, nodes })
    }

    /// Draws the state at step `T` from the reference distributions.
    pub fn initial_state(&self, n: usize, context: Array2<f64>, rng: &mut impl Rng) -> DiffusionState {
        let mut s = DiffusionState {
            t: self.t_max(),
            n,
            adj: vec![0; n * n],
            labels: None,
            context,
        };
        for i in 0..n {
            for j in i + 1..n {
                s.set_edge(i, j, draw(&self.transition.m_edge, rng) == 1);
            }
        }
        if self.denoiser.classes > 0 {
            s.labels = Some((0..n).map(|_| draw(&self.transition.m_node, rng)).collect());
        }
        s
    }

    /// Runs the reverse chain from a reference draw down to `t = 0`.
    pub fn reverse_sample(&self, n: usize, context: Array2<f64>, rng: &mut impl Rng) -> Result<DiffusionState> {
        self.reverse_sample_with(n, context, rng, &mut NoHook)
    }

    pub fn reverse_sample_with(
        &self,
        n: usize,
        context: Array2<f64>,
        rng: &mut impl Rng,
        hook: &mut dyn ReverseHook,
    ) -> Result<DiffusionState> {
        if n < 2 {
            return Err(Error::invalid(format!("reverse sampling needs n >= 2, got {n}")));
        }
        if context.nrows() != n {
            return Err(Error::Shape(format!("{} context rows for {n} nodes", context.nrows())));
        }
        let mut state = self.initial_state(n, context, rng);
        for t in (1..=self.t_max()).rev() {
            state.t = t;
            let mut dist = self.step_distribution(&state)?;
            hook.reweight(&state, &mut dist)?;
            for i in 0..n {
                for j in i + 1..n {
                    let r = i * n + j;
                    let present = draw(&[dist.edges[(r, 0)], dist.edges[(r, 1)]], rng) == 1;
                    state.set_edge(i, j, present);
                }
            }
            if let (Some(p), Some(labels)) = (&dist.nodes, &mut state.labels) {
                for (v, l) in labels.iter_mut().enumerate() {
                    *l = draw(p.row(v).as_slice().expect("contiguous"), rng);
                }
            }
            state.t = t - 1;
            hook.constrain(&mut state)?;
        }
        state.t = 0;
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            denoiser: self.denoiser,
            transition: self.transition.clone(),
            histograms: self.histograms.clone(),
            tensors: self.params.to_stored(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unsupported checkpoint format {:?}", file.format)));
        }
        let params = ParamStore::from_stored(&file.tensors)?;
        let reference = init_params(&file.denoiser, &mut crate::rng_stream(0, 0));
        params.check_layout(&reference)?;
        Ok(DiffusionModel {
            schedule: NoiseSchedule::cosine(file.config.t_max),
            config: file.config,
            denoiser: file.denoiser,
            transition: file.transition,
            params,
            histograms: file.histograms,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

const CHECKPOINT_FORMAT: &str = "subdiff-denoiser-1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    config: TrainConfig,
    denoiser: DenoiserConfig,
    transition: Transition,
    histograms: Histograms,
    tensors: Vec<StoredTensor>,
}
