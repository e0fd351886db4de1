//! Minimal neural-network toolkit: a differentiation tape, named parameter
//! tensors and the Adam optimiser.

mod tape;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use tape::{Grads, Tape, Var};

use crate::error::{Error, Result};

/// Named 2-D parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
    index: BTreeMap<String, usize>,
}

/// Flat serialised form of one tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
    }

    /// Glorot-uniform weight matrix.
    pub fn insert_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        self.insert(name, Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a)));
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) {
        self.insert(name, Array2::zeros((rows, cols)));
    }

    pub fn index(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        &self.tensors[self.index(name)]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_stored(&self) -> Vec<StoredTensor> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| StoredTensor {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_stored(stored: &[StoredTensor]) -> Result<Self> {
        let mut p = ParamStore::new();
        for t in stored {
            let value = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
                .map_err(|e| Error::Shape(format!("tensor {}: {e}", t.name)))?;
            if p.index.contains_key(&t.name) {
                return Err(Error::Shape(format!("duplicate tensor {}", t.name)));
            }
            p.insert(t.name.clone(), value);
        }
        Ok(p)
    }

    /// Errors unless `self` has exactly the names and shapes of `other`.
    pub fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape(format!(
                "parameter names differ: {:?} vs {:?}",
                self.names, other.names
            )));
        }
        for (name, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.dim() != b.dim() {
                return Err(Error::Shape(format!(
                    "parameter {name}: {:?} vs {:?}",
                    a.dim(),
                    b.dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.tensors().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        Adam {
            cfg,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &mut [Array2<f64>]) {
        let c = self.cfg;
        if c.clip > 0.0 {
            let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
            if norm > c.clip {
                let f = c.clip / norm;
                grads.iter_mut().for_each(|g| *g *= f);
            }
        }
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for ((p, g), (m, v)) in store
            .tensors_mut()
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            m.zip_mut_with(g, |mi, &gi| *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|pi, &mi, &vi| {
                *pi -= c.lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
            });
        }
    }
}

/// Compares the tape gradient of `f` with central differences of step `h`
/// on every entry of every tensor in `store`. Returns, per tensor,
/// `|analytic - numeric| / max(|analytic|, |numeric|)` over the whole
/// tensor (0 when both vanish).
pub fn check_gradients(
    store: &ParamStore,
    h: f64,
    f: impl Fn(&mut Tape, &ParamStore) -> Var,
) -> Vec<(String, f64)> {
    let mut tape = Tape::new();
    let out = f(&mut tape, store);
    let analytic = tape.backward(out).params(store);
    let eval = |p: &ParamStore| {
        let mut t = Tape::new();
        let o = f(&mut t, p);
        t.scalar(o)
    };
    let mut probe = store.clone();
    let mut report = Vec::with_capacity(store.len());
    for (k, name) in store.names().iter().enumerate() {
        let mut numeric = Array2::zeros(store.tensors()[k].raw_dim());
        for idx in 0..numeric.len() {
            let orig = store.tensors()[k].as_slice().expect("contiguous")[idx];
            probe.tensors_mut()[k].as_slice_mut().expect("contiguous")[idx] = orig + h;
            let up = eval(&probe);
            probe.tensors_mut()[k].as_slice_mut().expect("contiguous")[idx] = orig - h;
            let down = eval(&probe);
            probe.tensors_mut()[k].as_slice_mut().expect("contiguous")[idx] = orig;
            numeric.as_slice_mut().expect("contiguous")[idx] = (up - down) / (2.0 * h);
        }
        let norm = |a: &Array2<f64>| a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&(&analytic[k] - &numeric));
        let scale = norm(&analytic[k]).max(norm(&numeric));
        report.push((name.clone(), if scale == 0.0 { 0.0 } else { diff / scale }));
    }
    report
}
