//! Time-dependent graph regressors used to guide style transfer.
//!
//! All three architectures read the edge state through the relaxed pair
//! tensor `E` (`n^2 x 2`), so the prediction can be differentiated with
//! respect to it.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{edge_one_hot, forward_sample, time_embedding, DiffusionModel, DiffusionState, TIME_FREQS};
use crate::error::{Error, Result};
use crate::graph::{triangles_per_node, write_atomic, Graph};
use crate::nn::{Adam, AdamConfig, ParamStore, StoredTensor, Tape, Var};
use crate::rng_stream;
use crate::subgraph::{local_context_dense, Subgraph, LOCAL_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleAttr {
    /// `2 |E|`.
    SumDegree,
    MaxDegree,
    Triangles,
}

impl StyleAttr {
    pub fn value(self, g: &Graph) -> f64 {
        match self {
            StyleAttr::SumDegree => (2 * g.edge_count()) as f64,
            StyleAttr::MaxDegree => (0..g.n()).map(|v| g.degree(v)).max().unwrap_or(0) as f64,
            StyleAttr::Triangles => (triangles_per_node(g).iter().sum::<u64>() / 3) as f64,
        }
    }
}

impl std::str::FromStr for StyleAttr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_degree" | "sum-degree" => Ok(StyleAttr::SumDegree),
            "max_degree" | "max-degree" => Ok(StyleAttr::MaxDegree),
            "triangles" => Ok(StyleAttr::Triangles),
            _ => Err(Error::invalid(format!(
                "unknown attribute {s:?} (expected sum_degree, max_degree, triangles)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorArch {
    /// Neighbour messages scaled by `1 / n` (GCN-like).
    Mp,
    /// Sum aggregation followed by a two-layer MLP (GIN-like).
    MpSum,
    /// Dense attention with an edge-state bias (graph-transformer-like).
    Attn,
}

impl std::str::FromStr for RegressorArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mp" => Ok(RegressorArch::Mp),
            "mp-sum" => Ok(RegressorArch::MpSum),
            "attn" => Ok(RegressorArch::Attn),
            _ => Err(Error::invalid(format!(
                "unknown regressor architecture {s:?} (expected mp, mp-sum, attn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorConfig {
    pub arch: RegressorArch,
    pub layers: usize,
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            arch: RegressorArch::Mp,
            layers: 2,
            hidden: 32,
            steps: 2000,
            batch: 8,
            lr: 1e-2,
            clip: 1.0,
            seed: 0,
        }
    }
}

const NODE_DIM: usize = 1 + LOCAL_DIM + 2 * TIME_FREQS;

pub fn init_regressor(cfg: &RegressorConfig, rng: &mut impl Rng) -> ParamStore {
    let h = cfg.hidden;
    let mut p = ParamStore::new();
    p.insert_glorot("in.w", NODE_DIM, h, rng);
    p.insert_zeros("in.b", 1, h);
    for l in 0..cfg.layers {
        let name = |s: &str| format!("l{l}.{s}");
        match cfg.arch {
            RegressorArch::Mp => {
                p.insert_glorot(name("msg.w"), h, h, rng);
                p.insert_glorot(name("self.w"), h, h, rng);
                p.insert_zeros(name("self.b"), 1, h);
            }
            RegressorArch::MpSum => {
                p.insert_glorot(name("mlp1.w"), h, h, rng);
                p.insert_zeros(name("mlp1.b"), 1, h);
                p.insert_glorot(name("mlp2.w"), h, h, rng);
                p.insert_zeros(name("mlp2.b"), 1, h);
            }
            RegressorArch::Attn => {
                p.insert_glorot(name("q.w"), h, h, rng);
                p.insert_glorot(name("k.w"), h, h, rng);
                p.insert_glorot(name("v.w"), h, h, rng);
                p.insert_glorot(name("edge.w"), 2, 1, rng);
                p.insert_glorot(name("o.w"), h, h, rng);
                p.insert_zeros(name("o.b"), 1, h);
            }
        }
    }
    p.insert_glorot("out.w", h, 1, rng);
    p.insert_zeros("out.b", 1, 1);
    p
}

/// Node features `[1 | Q_t | time]` and the pair one-hots of a state.
pub fn regressor_input(state: &DiffusionState, n_max: usize, t_max: usize) -> (Array2<f64>, Array2<f64>) {
    let n = state.n;
    let q = local_context_dense(n, &state.adj, n_max);
    let time = time_embedding(state.t, t_max);
    let mut x = Array2::zeros((n, NODE_DIM));
    for v in 0..n {
        x[(v, 0)] = 1.0;
        for k in 0..LOCAL_DIM {
            x[(v, 1 + k)] = q[(v, k)];
        }
        for (k, val) in time.iter().enumerate() {
            x[(v, 1 + LOCAL_DIM + k)] = *val;
        }
    }
    (x, edge_one_hot(n, &state.adj))
}

/// Standardised prediction (`1 x 1`) from node features `x` and the pair
/// tensor `e`.
pub fn regressor_forward(tape: &mut Tape, p: &ParamStore, cfg: &RegressorConfig, x: Var, e: Var, n: usize) -> Var {
    let h = cfg.hidden;
    let (w, b) = (tape.param(p, "in.w"), tape.param(p, "in.b"));
    let mut hs = tape.affine(x, w, b);
    let present = tape.col(e, 1);
    let inv_n = 1.0 / n.max(1) as f64;
    for l in 0..cfg.layers {
        let par = |tape: &mut Tape, s: &str| tape.param(p, &format!("l{l}.{s}"));
        let upd = match cfg.arch {
            RegressorArch::Mp => {
                let mw = par(tape, "msg.w");
                let msg = tape.matmul(hs, mw);
                let msg = tape.pair_src(msg, n);
                let msg = tape.mul_col(msg, present);
                let agg = tape.reduce_pairs(msg, n);
                let agg = tape.scale(agg, inv_n);
                let (sw, sb) = (par(tape, "self.w"), par(tape, "self.b"));
                let own = tape.affine(hs, sw, sb);
                let z = tape.add(own, agg);
                tape.silu(z)
            }
            RegressorArch::MpSum => {
                let nb = tape.pair_src(hs, n);
                let nb = tape.mul_col(nb, present);
                let agg = tape.reduce_pairs(nb, n);
                let z = tape.add(hs, agg);
                let (w1, b1) = (par(tape, "mlp1.w"), par(tape, "mlp1.b"));
                let z = tape.affine(z, w1, b1);
                let z = tape.silu(z);
                let (w2, b2) = (par(tape, "mlp2.w"), par(tape, "mlp2.b"));
                let z = tape.affine(z, w2, b2);
                tape.silu(z)
            }
            RegressorArch::Attn => {
                let (qw, kw, vw) = (par(tape, "q.w"), par(tape, "k.w"), par(tape, "v.w"));
                let q = tape.matmul(hs, qw);
                let k = tape.matmul(hs, kw);
                let v = tape.matmul(hs, vw);
                let qd = tape.pair_dst(q, n);
                let ks = tape.pair_src(k, n);
                let qk = tape.mul(qd, ks);
                let ones = tape.leaf(Array2::from_elem((h, 1), 1.0 / (h as f64).sqrt()));
                let scores = tape.matmul(qk, ones);
                let ew = par(tape, "edge.w");
                let bias = tape.matmul(e, ew);
                let scores = tape.add(scores, bias);
                let att = tape.pair_softmax(scores, n);
                let vs = tape.pair_src(v, n);
                let weighted = tape.mul_col(vs, att);
                let agg = tape.reduce_pairs(weighted, n);
                let (ow, ob) = (par(tape, "o.w"), par(tape, "o.b"));
                let z = tape.affine(agg, ow, ob);
                tape.silu(z)
            }
        };
        hs = tape.add(hs, upd);
    }
    let pooled = tape.sum_rows(hs);
    let (ow, ob) = (tape.param(p, "out.w"), tape.param(p, "out.b"));
    tape.affine(pooled, ow, ob)
}

/// A trained regressor predicting a graph attribute from a noisy state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub attr: StyleAttr,
    pub config: RegressorConfig,
    /// Targets are standardised with these before training.
    pub mean: f64,
    pub std: f64,
    pub t_max: usize,
    pub n_max: usize,
    #[serde(skip)]
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct RegressorFile {
    format: String,
    #[serde(flatten)]
    meta: Regressor,
    tensors: Vec<StoredTensor>,
}

const REGRESSOR_FORMAT: &str = "subdiff-regressor-1";

impl Regressor {
    /// Prediction in attribute units.
    pub fn predict(&self, state: &DiffusionState) -> f64 {
        let (x, e) = regressor_input(state, self.n_max, self.t_max);
        let mut tape = Tape::new();
        let (x, e) = (tape.leaf(x), tape.leaf(e));
        let y = regressor_forward(&mut tape, &self.params, &self.config, x, e, state.n);
        tape.scalar(y) * self.std + self.mean
    }

    /// Gradient of `(y_hat - target)^2`, in standardised units, with respect
    /// to the relaxed pair tensor, symmetrised so that entry `(i, j)` holds
    /// the total effect of the unordered pair's state.
    pub fn guidance_gradient(&self, state: &DiffusionState, target: f64) -> Array2<f64> {
        let n = state.n;
        let (x, e) = regressor_input(state, self.n_max, self.t_max);
        let mut tape = Tape::new();
        let (x, e) = (tape.leaf(x), tape.leaf(e));
        let y = regressor_forward(&mut tape, &self.params, &self.config, x, e, n);
        let goal = (target - self.mean) / self.std;
        let loss = tape.squared_error(y, Array2::from_elem((1, 1), goal));
        let g = tape.backward(loss).of(&tape, e);
        let mut sym = Array2::zeros(g.raw_dim());
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    for k in 0..2 {
                        sym[(i * n + j, k)] = g[(i * n + j, k)] + g[(j * n + i, k)];
                    }
                }
            }
        }
        sym
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&RegressorFile {
            format: REGRESSOR_FORMAT.into(),
            meta: self.clone(),
            tensors: self.params.to_stored(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RegressorFile = serde_json::from_str(text)?;
        if file.format != REGRESSOR_FORMAT {
            return Err(Error::invalid(format!("unsupported regressor format {:?}", file.format)));
        }
        let params = ParamStore::from_stored(&file.tensors)?;
        params.check_layout(&init_regressor(&file.meta.config, &mut rng_stream(0, 0)))?;
        Ok(Regressor { params, ..file.meta })
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

/// Fits a regressor from noisy states (drawn with the diffusion model's
/// forward process at uniform steps) to the attribute of the clean
/// subgraph. Returns the regressor and the per-step batch losses.
pub fn train_regressor(
    subgraphs: &[Subgraph],
    attr: StyleAttr,
    cfg: &RegressorConfig,
    model: &DiffusionModel,
) -> Result<(Regressor, Vec<f64>)> {
    if subgraphs.is_empty() {
        return Err(Error::invalid("no training subgraphs"));
    }
    if model.t_max() == 0 && cfg.steps > 0 {
        return Err(Error::invalid("regressor training needs t_max >= 1"));
    }
    let targets: Vec<f64> = subgraphs.iter().map(|s| attr.value(&s.graph)).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / targets.len() as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let n_max = model.denoiser.n_max;
    let t_max = model.t_max();
    let mut params = init_regressor(cfg, &mut rng_stream(cfg.seed, 0));
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            clip: cfg.clip,
            ..Default::default()
        },
        &params,
    );
    let clean: Vec<DiffusionState> = subgraphs
        .iter()
        .map(|s| {
            let mut st = DiffusionState::from_graph(&s.graph, s.context.clone(), 0);
            st.labels = None;
            st
        })
        .collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = rng_stream(cfg.seed, step as u64 + 1);
        let mut grads: Vec<Array2<f64>> = params.tensors().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        let mut total = 0.0;
        for _ in 0..cfg.batch.max(1) {
            let idx = rng.gen_range(0..clean.len());
            let t = rng.gen_range(1..=t_max);
            let noisy = forward_sample(&clean[idx], t, &model.schedule, &model.transition, &mut rng);
            let (x, e) = regressor_input(&noisy, n_max, t_max);
            let mut tape = Tape::new();
            let (x, e) = (tape.leaf(x), tape.leaf(e));
            let y = regressor_forward(&mut tape, &params, cfg, x, e, noisy.n);
            let goal = (targets[idx] - mean) / std;
            let loss = tape.squared_error(y, Array2::from_elem((1, 1), goal));
            total += tape.scalar(loss);
            for (acc, g) in grads.iter_mut().zip(tape.backward(loss).params(&params)) {
                *acc += &g;
            }
        }
        let scale = 1.0 / cfg.batch.max(1) as f64;
        total *= scale;
        if !total.is_finite() {
            return Err(Error::Diverged { step, loss: total });
        }
        grads.iter_mut().for_each(|g| *g *= scale);
        opt.step(&mut params, &mut grads);
        losses.push(total);
    }
    Ok((
        Regressor {
            attr,
            config: cfg.clone(),
            mean,
            std,
            t_max,
            n_max,
            params,
        },
        losses,
    ))
}
