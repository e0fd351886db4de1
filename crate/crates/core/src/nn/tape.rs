//! Reverse-mode differentiation over 2-D `f64` arrays.
//!
//! A [`Tape`] records every operation of one forward pass. Pair tensors
//! hold one row per ordered node pair `(i, j)` of an `n`-node graph at row
//! `i * n + j`.

use ndarray::{s, Array1, Array2, Axis};

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a + 1 * bias` with bias `1 x k`.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    /// `n x k -> n^2 x k`, row `(i, j)` = row `j`.
    PairSrc(Var, usize),
    /// `n x k -> n^2 x k`, row `(i, j)` = row `i`.
    PairDst(Var, usize),
    /// `n^2 x k -> n x k`, row `i` = sum over `j != i` of row `(i, j)`.
    ReducePairs(Var, usize),
    /// `m x k -> 1 x k`.
    SumRows(Var),
    /// `m x k` times an `m x 1` column, broadcast over `k`.
    MulCol(Var, Var),
    /// Column `c` of `m x k` as `m x 1`.
    Col(Var, usize),
    /// `n^2 x 1` scores -> weights, softmax over `j != i` for each `i`;
    /// diagonal entries are zero.
    PairSoftmax(Var, usize),
    /// `sum_r w_r * -log softmax(logits_r)[t_r]` as `1 x 1`. Stores the
    /// row-wise softmax for the backward pass.
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Array2<f64>,
    },
    /// `sum (a - y)^2` as `1 x 1`.
    SquaredError(Var, Array2<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every recorded node.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
    params: Vec<(usize, usize)>,
}

impl Grads {
    /// Gradient of `v`, zero-filled if it did not influence the output.
    pub fn of(&self, tape: &Tape, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(tape.value(v).raw_dim()))
    }

    /// Gradients aligned with the tensors of `store`.
    pub fn params(&self, store: &ParamStore) -> Vec<Array2<f64>> {
        let mut out: Vec<Array2<f64>> = store.tensors().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        for &(node, p) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[p] += g;
            }
        }
        out
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

fn log_softmax_row(row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.mapv(|x| x - lse)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[(0, 0)]
    }

    /// Constant or differentiable input.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let idx = store.index(name);
        self.push(store.tensors()[idx].clone(), Op::Param(idx))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a) + &self.value(bias).row(0);
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(silu);
        self.push(v, Op::Silu(a))
    }

    /// `x @ w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn pair_src(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.nrows(), n, "pair_src: expected {n} rows");
        let mut out = Array2::zeros((n * n, x.ncols()));
        for i in 0..n {
            out.slice_mut(s![i * n..(i + 1) * n, ..]).assign(x);
        }
        self.push(out, Op::PairSrc(a, n))
    }

    pub fn pair_dst(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.nrows(), n, "pair_dst: expected {n} rows");
        let mut out = Array2::zeros((n * n, x.ncols()));
        for i in 0..n {
            let row = x.row(i);
            for j in 0..n {
                out.row_mut(i * n + j).assign(&row);
            }
        }
        self.push(out, Op::PairDst(a, n))
    }

    pub fn reduce_pairs(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.nrows(), n * n, "reduce_pairs: expected {} rows", n * n);
        let mut out = Array2::zeros((n, x.ncols()));
        for i in 0..n {
            let mut acc = out.row_mut(i);
            for j in 0..n {
                if j != i {
                    acc += &x.row(i * n + j);
                }
            }
        }
        self.push(out, Op::ReducePairs(a, n))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let c = self.value(col);
        assert_eq!(c.ncols(), 1, "mul_col: column operand must be m x 1");
        let v = self.value(a) * c;
        self.push(v, Op::MulCol(a, col))
    }

    pub fn col(&mut self, a: Var, c: usize) -> Var {
        let v = self.value(a).slice(s![.., c..c + 1]).to_owned();
        self.push(v, Op::Col(a, c))
    }

    pub fn pair_softmax(&mut self, scores: Var, n: usize) -> Var {
        let x = self.value(scores);
        let mut out = Array2::zeros((n * n, 1));
        for i in 0..n {
            let max = (0..n)
                .filter(|&j| j != i)
                .map(|j| x[(i * n + j, 0)])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let e = (x[(i * n + j, 0)] - max).exp();
                out[(i * n + j, 0)] = e;
                z += e;
            }
            for j in (0..n).filter(|&j| j != i) {
                out[(i * n + j, 0)] /= z;
            }
        }
        self.push(out, Op::PairSoftmax(scores, n))
    }

    /// Weighted cross-entropy of `logits` rows against class `targets`.
    pub fn softmax_xent(&mut self, logits: Var, targets: Vec<usize>, weights: Vec<f64>) -> Var {
        let x = self.value(logits);
        assert_eq!(targets.len(), x.nrows());
        assert_eq!(weights.len(), x.nrows());
        let mut probs = Array2::zeros(x.raw_dim());
        let mut total = 0.0;
        for (r, row) in x.rows().into_iter().enumerate() {
            let lp = log_softmax_row(row);
            if weights[r] != 0.0 {
                total -= weights[r] * lp[targets[r]];
            }
            probs.row_mut(r).assign(&lp.mapv(f64::exp));
        }
        let v = Array2::from_elem((1, 1), total);
        self.push(
            v,
            Op::SoftmaxXent {
                logits,
                targets,
                weights,
                probs,
            },
        )
    }

    pub fn squared_error(&mut self, a: Var, target: Array2<f64>) -> Var {
        let d = self.value(a) - &target;
        let v = Array2::from_elem((1, 1), d.iter().map(|x| x * x).sum());
        self.push(v, Op::SquaredError(a, target))
    }

    /// Backpropagates from the `1 x 1` node `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Array2::ones((1, 1)));
        let mut params = Vec::new();
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, d: Array2<f64>| match &mut grads[v.0] {
                Some(x) => *x += &d,
                slot => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => params.push((idx, *p)),
                Op::MatMul(a, b) => {
                    acc(*a, g.dot(&self.value(*b).t()));
                    acc(*b, self.value(*a).t().dot(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::AddRow(a, b) => {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(*a, g.clone());
                }
                Op::Mul(a, b) => {
                    acc(*a, &g * self.value(*b));
                    acc(*b, &g * self.value(*a));
                }
                Op::Scale(a, c) => acc(*a, &g * *c),
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let mut d = g.clone();
                    d.zip_mut_with(x, |gi, &xi| *gi *= silu_grad(xi));
                    acc(*a, d);
                }
                Op::PairSrc(a, n) => {
                    let mut d = Array2::zeros((*n, g.ncols()));
                    for i in 0..*n {
                        d += &g.slice(s![i * n..(i + 1) * n, ..]);
                    }
                    acc(*a, d);
                }
                Op::PairDst(a, n) => {
                    let mut d = Array2::zeros((*n, g.ncols()));
                    for i in 0..*n {
                        d.row_mut(i)
                            .assign(&g.slice(s![i * n..(i + 1) * n, ..]).sum_axis(Axis(0)));
                    }
                    acc(*a, d);
                }
                Op::ReducePairs(a, n) => {
                    let mut d = Array2::zeros((n * n, g.ncols()));
                    for i in 0..*n {
                        for j in (0..*n).filter(|&j| j != i) {
                            d.row_mut(i * n + j).assign(&g.row(i));
                        }
                    }
                    acc(*a, d);
                }
                Op::SumRows(a) => {
                    let rows = self.value(*a).nrows();
                    let d = g.broadcast((rows, g.ncols())).expect("row broadcast").to_owned();
                    acc(*a, d);
                }
                Op::MulCol(a, c) => {
                    let col = self.value(*c);
                    acc(*a, &g * col);
                    let dc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*c, dc);
                }
                Op::Col(a, c) => {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    d.slice_mut(s![.., *c..*c + 1]).assign(&g);
                    acc(*a, d);
                }
                Op::PairSoftmax(a, n) => {
                    let w = &node.value;
                    let mut d = Array2::zeros((n * n, 1));
                    for i in 0..*n {
                        let dotp: f64 = (0..*n).map(|j| w[(i * n + j, 0)] * g[(i * n + j, 0)]).sum();
                        for j in (0..*n).filter(|&j| j != i) {
                            d[(i * n + j, 0)] = w[(i * n + j, 0)] * (g[(i * n + j, 0)] - dotp);
                        }
                    }
                    acc(*a, d);
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    let up = g[(0, 0)];
                    let mut d = probs.clone();
                    for (r, mut row) in d.rows_mut().into_iter().enumerate() {
                        row[targets[r]] -= 1.0;
                        row *= weights[r] * up;
                    }
                    acc(*logits, d);
                }
                Op::SquaredError(a, y) => {
                    let d = (self.value(*a) - y) * (2.0 * g[(0, 0)]);
                    acc(*a, d);
                }
            }
            grads[idx] = Some(g);
        }
        Grads { grads, params }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_stream;
    use rand::Rng;

    fn rand_mat(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_stream(seed, 0);
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Checks d f / d x for a leaf input `x` by central differences.
    fn check(x0: Array2<f64>, f: impl Fn(&mut Tape, Var) -> Var) {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let out = f(&mut tape, x);
        let analytic = tape.backward(out).of(&tape, x);
        let h = 1e-5;
        for idx in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp.as_slice_mut().unwrap()[idx] += delta;
                let mut t = Tape::new();
                let v = t.leaf(xp);
                let o = f(&mut t, v);
                t.scalar(o)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[idx];
            assert!((a - fd).abs() < 1e-6 * (1.0 + fd.abs()), "entry {idx}: {a} vs {fd}");
        }
    }

    #[test]
    fn pair_ops_gradients() {
        let n = 4;
        let y = rand_mat(n, 3, 9);
        check(rand_mat(n, 3, 1), |t, x| {
            let a = t.pair_src(x, n);
            let b = t.pair_dst(x, n);
            let m = t.mul(a, b);
            let s = t.silu(m);
            let r = t.reduce_pairs(s, n);
            t.squared_error(r, y.clone())
        });
    }

    #[test]
    fn softmax_gradients() {
        let n = 5;
        check(rand_mat(n * n, 1, 2), |t, x| {
            let w = t.pair_softmax(x, n);
            let c = t.leaf(rand_mat(n * n, 2, 3));
            let m = t.mul_col(c, w);
            let r = t.reduce_pairs(m, n);
            let sr = t.sum_rows(r);
            t.squared_error(sr, Array2::zeros((1, 2)))
        });
        check(rand_mat(6, 3, 4), |t, x| t.softmax_xent(x, vec![0, 1, 2, 2, 1, 0], vec![1.0, 0.5, 0.0, 2.0, 1.0, 1.0]));
    }

    #[test]
    fn affine_and_columns() {
        let w0 = rand_mat(3, 2, 5);
        check(rand_mat(4, 3, 6), |t, x| {
            let w = t.leaf(w0.clone());
            let b = t.leaf(Array2::ones((1, 2)));
            let h = t.affine(x, w, b);
            let c = t.col(x, 1);
            let hc = t.mul_col(h, c);
            let s = t.scale(hc, 0.7);
            let z = t.add(s, h);
            t.squared_error(z, Array2::zeros((4, 2)))
        });
    }

    #[test]
    fn pair_softmax_rows_sum_to_one() {
        let n = 4;
        let mut t = Tape::new();
        let x = t.leaf(rand_mat(n * n, 1, 7));
        let w = t.pair_softmax(x, n);
        let v = t.value(w);
        for i in 0..n {
            let s: f64 = (0..n).map(|j| v[(i * n + j, 0)]).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(v[(i * n + i, 0)], 0.0);
        }
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::zeros((3, 2)));
        let l = t.softmax_xent(x, vec![0, 1, 1], vec![1.0; 3]);
        assert!((t.scalar(l) - 3.0 * 2f64.ln()).abs() < 1e-15);
    }
}
