//! Conditional editing of an observed subgraph: expansion (observed edges
//! are pinned present), denoising (unobserved pairs are pinned absent) and
//! regressor-guided style transfer.

mod regressor;

use serde::{Deserialize, Serialize};

pub use regressor::{
    init_regressor, regressor_forward, regressor_input, train_regressor, Regressor, RegressorArch, RegressorConfig,
    StyleAttr,
};

use crate::diffusion::{DiffusionModel, DiffusionState, ReverseHook, StepDistribution};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng_stream;
use crate::subgraph::Subgraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditTask {
    Expand,
    Denoise,
    Style,
}

impl std::str::FromStr for EditTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expand" => Ok(EditTask::Expand),
            "denoise" => Ok(EditTask::Denoise),
            "style" => Ok(EditTask::Style),
            _ => Err(Error::invalid(format!(
                "unknown task {s:?} (expected expand, denoise, style)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StyleSpec {
    pub target: f64,
    pub lambda: f64,
    pub regressor: Regressor,
}

#[derive(Debug, Clone)]
pub struct EditRequest {
    pub observed: Subgraph,
    pub task: EditTask,
    /// Number of independent samples.
    pub rounds: usize,
    /// Sample `r` uses random stream `r` of this seed.
    pub seed: u64,
    pub style: Option<StyleSpec>,
}

/// Pins observed edges (and labels) after every reverse step.
struct ExpandMask<'a> {
    observed: &'a Graph,
}

impl ReverseHook for ExpandMask<'_> {
    fn constrain(&mut self, state: &mut DiffusionState) -> Result<()> {
        for e in self.observed.edges() {
            state.set_edge(e.0, e.1, true);
        }
        if let (Some(obs), Some(labels)) = (self.observed.labels(), &mut state.labels) {
            labels.copy_from_slice(obs);
        }
        Ok(())
    }
}

/// Clears every pair that is not an observed edge after every reverse step.
struct DenoiseMask<'a> {
    observed: &'a Graph,
}

impl ReverseHook for DenoiseMask<'_> {
    fn constrain(&mut self, state: &mut DiffusionState) -> Result<()> {
        let n = state.n;
        for i in 0..n {
            for j in i + 1..n {
                if state.has_edge(i, j) && !self.observed.has_edge(i, j) {
                    state.set_edge(i, j, false);
                }
            }
        }
        Ok(())
    }
}

/// Multiplies the probability of each pair state `e` by
/// `exp(-lambda * g[e])`, `g` the regressor guidance gradient, and
/// renormalises.
struct Guidance<'a> {
    spec: &'a StyleSpec,
}

impl ReverseHook for Guidance<'_> {
    fn reweight(&mut self, state: &DiffusionState, dist: &mut StepDistribution) -> Result<()> {
        if self.spec.lambda == 0.0 {
            return Ok(());
        }
        let g = self.spec.regressor.guidance_gradient(state, self.spec.target);
        apply_guidance(dist, &g, self.spec.lambda, state.n);
        Ok(())
    }
}

/// Reweights every off-diagonal pair distribution in log space.
pub fn apply_guidance(dist: &mut StepDistribution, grad: &ndarray::Array2<f64>, lambda: f64, n: usize) {
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = i * n + j;
            let logs: Vec<f64> = (0..2)
                .map(|k| {
                    let p = dist.edges[(r, k)];
                    if p > 0.0 {
                        p.ln() - lambda * grad[(r, k)]
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                continue;
            }
            let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = w.iter().sum();
            for k in 0..2 {
                dist.edges[(r, k)] = w[k] / z;
            }
        }
    }
}

/// Forwards both hook calls and shows each constrained state to an
/// observer.
struct Observed<'a, H> {
    inner: H,
    sample: usize,
    observer: &'a mut dyn FnMut(usize, &DiffusionState),
}

impl<H: ReverseHook> ReverseHook for Observed<'_, H> {
    fn reweight(&mut self, state: &DiffusionState, dist: &mut StepDistribution) -> Result<()> {
        self.inner.reweight(state, dist)
    }

    fn constrain(&mut self, state: &mut DiffusionState) -> Result<()> {
        self.inner.constrain(state)?;
        (self.observer)(self.sample, state);
        Ok(())
    }
}

fn check_request(model: &DiffusionModel, req: &EditRequest) -> Result<()> {
    let n = req.observed.n();
    if n < 2 {
        return Err(Error::invalid(format!("observed subgraph has {n} nodes, need at least 2")));
    }
    if req.rounds == 0 {
        return Err(Error::invalid("rounds must be at least 1"));
    }
    if req.observed.context.ncols() != model.denoiser.context_dim {
        return Err(Error::Shape(format!(
            "observed context has {} columns, model expects {}",
            req.observed.context.ncols(),
            model.denoiser.context_dim
        )));
    }
    match (req.task, &req.style) {
        (EditTask::Style, None) => Err(Error::invalid("style task needs a target and a regressor")),
        (EditTask::Expand | EditTask::Denoise, Some(_)) => {
            Err(Error::invalid("style fields are only valid for the style task"))
        }
        (_, Some(s)) if s.lambda < 0.0 => Err(Error::invalid("lambda must be non-negative")),
        _ => Ok(()),
    }
}

/// Runs `req`, returning one graph per round on the observed node set.
pub fn run_edit(model: &DiffusionModel, req: &EditRequest) -> Result<Vec<Graph>> {
    run_edit_observed(model, req, &mut |_, _| {})
}

/// [`run_edit`] that also reports every intermediate state (after masks)
/// as `observer(sample_index, state)`.
pub fn run_edit_observed(
    model: &DiffusionModel,
    req: &EditRequest,
    observer: &mut dyn FnMut(usize, &DiffusionState),
) -> Result<Vec<Graph>> {
    check_request(model, req)?;
    let observed = if model.denoiser.classes > 0 {
        req.observed.graph.clone()
    } else {
        req.observed.graph.clone().without_labels()
    };
    if model.denoiser.classes > 0 && observed.labels().is_none() {
        return Err(Error::Shape("model expects node labels".into()));
    }
    let n = observed.n();
    let mut out = Vec::with_capacity(req.rounds);
    for r in 0..req.rounds {
        let mut rng = rng_stream(req.seed, r as u64);
        let context = req.observed.context.clone();
        let state = match req.task {
            EditTask::Expand => {
                let mut hook = Observed {
                    inner: ExpandMask { observed: &observed },
                    sample: r,
                    observer: &mut *observer,
                };
                model.reverse_sample_with(n, context, &mut rng, &mut hook)?
            }
            EditTask::Denoise => {
                let mut hook = Observed {
                    inner: DenoiseMask { observed: &observed },
                    sample: r,
                    observer: &mut *observer,
                };
                model.reverse_sample_with(n, context, &mut rng, &mut hook)?
            }
            EditTask::Style => {
                let spec = req.style.as_ref().expect("checked");
                let mut hook = Observed {
                    inner: Guidance { spec },
                    sample: r,
                    observer: &mut *observer,
                };
                model.reverse_sample_with(n, context, &mut rng, &mut hook)?
            }
        };
        out.push(state.graph());
    }
    Ok(out)
}

/// The per-pair distribution the style task samples from at `state`,
/// after guidance.
pub fn guided_step_distribution(model: &DiffusionModel, spec: &StyleSpec, state: &DiffusionState) -> Result<StepDistribution> {
    let mut dist = model.step_distribution(state)?;
    Guidance { spec }.reweight(state, &mut dist)?;
    Ok(dist)
}
