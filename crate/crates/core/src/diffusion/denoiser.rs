//! Dense message-passing denoiser over all node pairs of a small graph.
//!
//! Node states start from `[label one-hot | Q_t | time embedding]`, pair
//! states from the current edge one-hot. Each layer adds a projection of
//! the global context to every node, aggregates messages from all pairs
//! weighted by the pair state, and updates every pair from its endpoints
//! through symmetric functions only, so pair logits for `(i, j)` and
//! `(j, i)` are identical without further averaging.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DiffusionState;
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tape, Var};
use crate::subgraph::{local_context_dense, LOCAL_DIM};

/// Frequencies of the sinusoidal time embedding.
pub const TIME_FREQS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Node label classes; 0 when labels are not modelled.
    pub classes: usize,
    /// Columns of the global context.
    pub context_dim: usize,
    /// Scale for the size feature of the local context.
    pub n_max: usize,
}

impl DenoiserConfig {
    fn input_dim(&self) -> usize {
        self.classes.max(1) + LOCAL_DIM + 2 * TIME_FREQS
    }
}

/// `[sin(2^k pi tau), cos(2^k pi tau)]` for `k < TIME_FREQS`, `tau = t / T`.
pub fn time_embedding(t: usize, t_max: usize) -> Vec<f64> {
    let tau = if t_max == 0 { 0.0 } else { t as f64 / t_max as f64 };
    (0..TIME_FREQS)
        .flat_map(|k| {
            let w = std::f64::consts::PI * 2f64.powi(k as i32) * tau;
            [w.sin(), w.cos()]
        })
        .collect()
}

pub fn init_params(cfg: &DenoiserConfig, rng: &mut impl Rng) -> ParamStore {
    let h = cfg.hidden;
    let mut p = ParamStore::new();
    p.insert_glorot("in.w", cfg.input_dim(), h, rng);
    p.insert_zeros("in.b", 1, h);
    p.insert_glorot("edge_in.w", 2, h, rng);
    for l in 0..cfg.layers {
        p.insert_glorot(format!("l{l}.ctx.w"), cfg.context_dim, h, rng);
        p.insert_zeros(format!("l{l}.ctx.b"), 1, h);
        p.insert_glorot(format!("l{l}.msg.w"), h, h, rng);
        p.insert_glorot(format!("l{l}.self.w"), h, h, rng);
        p.insert_zeros(format!("l{l}.self.b"), 1, h);
        p.insert_glorot(format!("l{l}.pair.w"), h, h, rng);
        p.insert_glorot(format!("l{l}.pair_sum.w"), h, h, rng);
        p.insert_glorot(format!("l{l}.pair_prod.w"), h, h, rng);
        p.insert_zeros(format!("l{l}.pair.b"), 1, h);
    }
    p.insert_glorot("out_edge.w", h, 2, rng);
    p.insert_zeros("out_edge.b", 1, 2);
    if cfg.classes > 0 {
        p.insert_glorot("out_node.w", h, cfg.classes, rng);
        p.insert_zeros("out_node.b", 1, cfg.classes);
    }
    p
}

/// Inputs of one forward pass, independent of the parameters.
#[derive(Debug, Clone)]
pub struct DenoiserInput {
    pub n: usize,
    /// `n x input_dim`.
    pub nodes: Array2<f64>,
    /// `n^2 x 2` edge one-hots, zero rows on the diagonal.
    pub pairs: Array2<f64>,
    /// `n x context_dim`.
    pub context: Array2<f64>,
}

impl DenoiserInput {
    pub fn from_state(cfg: &DenoiserConfig, state: &DiffusionState, t_max: usize) -> Result<Self> {
        let n = state.n;
        if state.context.nrows() != n {
            return Err(Error::Shape(format!(
                "context has {} rows for {n} nodes",
                state.context.nrows()
            )));
        }
        if state.context.ncols() != cfg.context_dim {
            return Err(Error::Shape(format!(
                "context has {} columns, model expects {}",
                state.context.ncols(),
                cfg.context_dim
            )));
        }
        let q = local_context_dense(n, &state.adj, cfg.n_max);
        let time = time_embedding(state.t, t_max);
        let k = cfg.classes.max(1);
        let mut nodes = Array2::zeros((n, cfg.input_dim()));
        for v in 0..n {
            match (&state.labels, cfg.classes) {
                (Some(labels), c) if c > 0 => {
                    let l = labels[v];
                    if l >= c {
                        return Err(Error::Shape(format!("label {l} outside {c} classes")));
                    }
                    nodes[(v, l)] = 1.0;
                }
                (None, c) if c > 0 => return Err(Error::Shape("model expects node labels".into())),
                _ => nodes[(v, 0)] = 1.0,
            }
            for j in 0..LOCAL_DIM {
                nodes[(v, k + j)] = q[(v, j)];
            }
            for (j, x) in time.iter().enumerate() {
                nodes[(v, k + LOCAL_DIM + j)] = *x;
            }
        }
        Ok(DenoiserInput {
            n,
            nodes,
            pairs: edge_one_hot(n, &state.adj),
            context: state.context.clone(),
        })
    }
}

/// `n^2 x 2` one-hot of a dense adjacency; diagonal rows are zero.
pub fn edge_one_hot(n: usize, adj: &[u8]) -> Array2<f64> {
    let mut e = Array2::zeros((n * n, 2));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                e[(i * n + j, usize::from(adj[i * n + j] != 0))] = 1.0;
            }
        }
    }
    e
}

/// `n^2 x 1` indicator of off-diagonal pairs.
pub fn off_diagonal(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n * n, 1), |(r, _)| f64::from(u8::from(r / n != r % n)))
}

/// Tape variables of one forward pass.
pub struct DenoiserOutput {
    /// `n^2 x 2`.
    pub edge_logits: Var,
    /// `n x classes`.
    pub node_logits: Option<Var>,
    /// The pair input, as a differentiable leaf.
    pub pairs: Var,
}

pub fn forward(tape: &mut Tape, p: &ParamStore, cfg: &DenoiserConfig, input: &DenoiserInput) -> DenoiserOutput {
    let n = input.n;
    let x = tape.leaf(input.nodes.clone());
    let e = tape.leaf(input.pairs.clone());
    let c = tape.leaf(input.context.clone());
    let mask = tape.leaf(off_diagonal(n));

    let (w, b) = (tape.param(p, "in.w"), tape.param(p, "in.b"));
    let mut h = tape.affine(x, w, b);
    let w = tape.param(p, "edge_in.w");
    let mut m = tape.matmul(e, w);
    let inv_n = 1.0 / n.max(1) as f64;
    for l in 0..cfg.layers {
        let par = |tape: &mut Tape, name: &str| tape.param(p, &format!("l{l}.{name}"));
        let (cw, cb) = (par(tape, "ctx.w"), par(tape, "ctx.b"));
        let ctx = tape.affine(c, cw, cb);
        let ht = tape.add(h, ctx);

        let mw = par(tape, "msg.w");
        let msg = tape.matmul(ht, mw);
        let msg = tape.pair_src(msg, n);
        let msg = tape.mul(m, msg);
        let agg = tape.reduce_pairs(msg, n);
        let agg = tape.scale(agg, inv_n);
        let (sw, sb) = (par(tape, "self.w"), par(tape, "self.b"));
        let own = tape.affine(ht, sw, sb);
        let upd = tape.add(own, agg);
        let upd = tape.silu(upd);
        h = tape.add(ht, upd);

        let dst = tape.pair_dst(h, n);
        let src = tape.pair_src(h, n);
        let sum = tape.add(dst, src);
        let prod = tape.mul(dst, src);
        let (pw, pb) = (par(tape, "pair.w"), par(tape, "pair.b"));
        let own = tape.affine(m, pw, pb);
        let sw = par(tape, "pair_sum.w");
        let from_sum = tape.matmul(sum, sw);
        let xw = par(tape, "pair_prod.w");
        let from_prod = tape.matmul(prod, xw);
        let upd = tape.add(own, from_sum);
        let upd = tape.add(upd, from_prod);
        let upd = tape.silu(upd);
        let upd = tape.mul_col(upd, mask);
        m = tape.add(m, upd);
    }
    let (ow, ob) = (tape.param(p, "out_edge.w"), tape.param(p, "out_edge.b"));
    let edge_logits = tape.affine(m, ow, ob);
    let node_logits = (cfg.classes > 0).then(|| {
        let (nw, nb) = (tape.param(p, "out_node.w"), tape.param(p, "out_node.b"));
        tape.affine(h, nw, nb)
    });
    DenoiserOutput {
        edge_logits,
        node_logits,
        pairs: e,
    }
}

/// Mean cross-entropy of the clean edge states over unordered pairs plus,
/// when labels are modelled, mean cross-entropy of the clean labels.
pub fn loss(tape: &mut Tape, out: &DenoiserOutput, n: usize, clean_adj: &[u8], clean_labels: Option<&[usize]>) -> Var {
    let pairs = n * n.saturating_sub(1) / 2;
    let mut targets = vec![0usize; n * n];
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            targets[i * n + j] = usize::from(clean_adj[i * n + j] != 0);
            weights[i * n + j] = 1.0 / pairs.max(1) as f64;
        }
    }
    let edge = tape.softmax_xent(out.edge_logits, targets, weights);
    match (out.node_logits, clean_labels) {
        (Some(logits), Some(labels)) => {
            let node = tape.softmax_xent(logits, labels.to_vec(), vec![1.0 / n as f64; n]);
            tape.add(edge, node)
        }
        _ => edge,
    }
}

/// Softmax of `n^2 x k` logits.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    out
}

/// Edge logits (`n^2 x 2`) and node logits (`n x classes`) for `state`.
pub fn denoiser_apply(
    p: &ParamStore,
    cfg: &DenoiserConfig,
    state: &DiffusionState,
    t_max: usize,
) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    let input = DenoiserInput::from_state(cfg, state, t_max)?;
    let mut tape = Tape::new();
    let out = forward(&mut tape, p, cfg, &input);
    Ok((
        tape.value(out.edge_logits).clone(),
        out.node_logits.map(|v| tape.value(v).clone()),
    ))
}
