//! Denoiser training on a collection of subgraphs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    denoiser_forward, denoiser_loss, forward_sample, init_params, DenoiserConfig, DenoiserInput, DiffusionModel,
    DiffusionState, NoiseSchedule, Transition, TransitionKind,
};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Tape};
use crate::rng_stream;
use crate::subgraph::{build_histograms, Subgraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub t_max: usize,
    pub layers: usize,
    pub hidden: usize,
    pub steps: usize,
    /// Subgraphs per optimiser step.
    pub batch: usize,
    pub lr: f64,
    /// Global gradient-norm clip; `0` disables it.
    pub clip: f64,
    pub transition: TransitionKind,
    /// Model node labels when every training subgraph carries them.
    pub use_labels: bool,
    /// Scale of the size feature in the local context.
    pub n_max: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            t_max: 500,
            layers: 4,
            hidden: 64,
            steps: 1000,
            batch: 4,
            lr: 1e-3,
            clip: 1.0,
            transition: TransitionKind::Marginal,
            use_labels: false,
            n_max: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: DiffusionModel,
    /// Mean batch loss of every step.
    pub losses: Vec<f64>,
}

fn clean_state(s: &Subgraph, use_labels: bool) -> DiffusionState {
    let mut st = DiffusionState::from_graph(&s.graph, s.context.clone(), 0);
    if !use_labels {
        st.labels = None;
    }
    st
}

/// Fits the denoiser to `subgraphs`. Step `k` draws its subgraphs, steps
/// and noise from random stream `k + 1` of `cfg.seed`; parameters are
/// initialised from stream 0.
pub fn train(subgraphs: &[Subgraph], cfg: &TrainConfig) -> Result<TrainOutput> {
    let Some(first) = subgraphs.first() else {
        return Err(Error::invalid("no training subgraphs"));
    };
    if cfg.t_max == 0 && cfg.steps > 0 {
        return Err(Error::invalid("training needs t_max >= 1"));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch must be at least 1"));
    }
    let context_dim = first.context.ncols();
    if let Some(bad) = subgraphs.iter().find(|s| s.context.ncols() != context_dim) {
        return Err(Error::Shape(format!(
            "context widths differ: {} vs {}",
            context_dim,
            bad.context.ncols()
        )));
    }
    if let Some(big) = subgraphs.iter().find(|s| s.n() > cfg.n_max) {
        return Err(Error::invalid(format!(
            "subgraph with {} nodes exceeds n_max = {}",
            big.n(),
            cfg.n_max
        )));
    }

    let use_labels = cfg.use_labels && subgraphs.iter().all(|s| s.graph.labels().is_some());
    let (mut edges, mut pairs) = (0usize, 0usize);
    let mut label_counts: Vec<f64> = Vec::new();
    for s in subgraphs {
        edges += s.graph.edge_count();
        pairs += s.n() * s.n().saturating_sub(1) / 2;
        if use_labels {
            for &l in s.graph.labels().expect("checked") {
                if l >= label_counts.len() {
                    label_counts.resize(l + 1, 0.0);
                }
                label_counts[l] += 1.0;
            }
        }
    }
    let total: f64 = label_counts.iter().sum();
    let label_freq: Vec<f64> = label_counts.iter().map(|c| c / total).collect();
    let density = if pairs == 0 { 0.0 } else { edges as f64 / pairs as f64 };
    let transition = Transition::new(cfg.transition, density, &label_freq);
    let denoiser = DenoiserConfig {
        layers: cfg.layers,
        hidden: cfg.hidden,
        classes: label_freq.len(),
        context_dim,
        n_max: cfg.n_max,
    };
    let schedule = NoiseSchedule::cosine(cfg.t_max);
    let mut params = init_params(&denoiser, &mut rng_stream(cfg.seed, 0));
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            clip: cfg.clip,
            ..Default::default()
        },
        &params,
    );

    let clean: Vec<DiffusionState> = subgraphs.iter().map(|s| clean_state(s, use_labels)).collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = rng_stream(cfg.seed, step as u64 + 1);
        let mut grads: Vec<_> = params.tensors().iter().map(|t| ndarray::Array2::zeros(t.raw_dim())).collect();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch {
            let s0 = &clean[rng.gen_range(0..clean.len())];
            let t = rng.gen_range(1..=cfg.t_max);
            let noisy = forward_sample(s0, t, &schedule, &transition, &mut rng);
            let input = DenoiserInput::from_state(&denoiser, &noisy, cfg.t_max)?;
            let mut tape = Tape::new();
            let out = denoiser_forward(&mut tape, &params, &denoiser, &input);
            let loss = denoiser_loss(&mut tape, &out, s0.n, &s0.adj, s0.labels.as_deref());
            batch_loss += tape.scalar(loss);
            for (acc, g) in grads.iter_mut().zip(tape.backward(loss).params(&params)) {
                *acc += &g;
            }
        }
        let scale = 1.0 / cfg.batch as f64;
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: batch_loss,
            });
        }
        grads.iter_mut().for_each(|g| *g *= scale);
        opt.step(&mut params, &mut grads);
        losses.push(batch_loss);
    }
    Ok(TrainOutput {
        model: DiffusionModel {
            config: cfg.clone(),
            denoiser,
            schedule,
            transition,
            params,
            histograms: build_histograms(subgraphs),
        },
        losses,
    })
}

/// Denoising loss of `model` on subgraph `s` noised to step `t`.
pub fn eval_loss(model: &DiffusionModel, s: &Subgraph, t: usize, rng: &mut impl Rng) -> Result<f64> {
    let s0 = clean_state(s, model.denoiser.classes > 0);
    let noisy = forward_sample(&s0, t, &model.schedule, &model.transition, rng);
    let input = DenoiserInput::from_state(&model.denoiser, &noisy, model.t_max())?;
    let mut tape = Tape::new();
    let out = denoiser_forward(&mut tape, &model.params, &model.denoiser, &input);
    let loss = denoiser_loss(&mut tape, &out, s0.n, &s0.adj, s0.labels.as_deref());
    Ok(tape.scalar(loss))
}
