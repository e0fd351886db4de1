//! Smallest nonzero eigenpairs of the combinatorial Laplacian `L = D - A`.
//!
//! Eigenvectors are made canonical so that results depend only on the graph
//! and its node numbering, never on solver internals:
//! - the first entry with magnitude above [`ZERO_ENTRY`] is positive;
//! - a degenerate eigenspace is re-based by projecting the standard basis
//!   vectors `e_0, e_1, ...` onto it and orthonormalising in that order;
//! - vectors sharing an eigenvalue are ordered lexicographically, largest
//!   first.

use faer::{Mat, Side};

use super::Graph;
use crate::error::{Error, Result};

const ZERO_ENTRY: f64 = 1e-9;
const TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// `vectors[k][v]`: entry of node `v` in the `k`-th eigenvector; unit norm.
    pub vectors: Vec<Vec<f64>>,
}

pub fn laplacian_eigens(g: &Graph, k: usize) -> Result<Eigenpairs> {
    let n = g.n();
    if k >= n.max(1) {
        return Err(Error::invalid(format!(
            "requested {k} nonzero eigenpairs of a {n}-node Laplacian"
        )));
    }
    let (_, components) = g.components();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    if k == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }

    let mut lap = Mat::<f64>::zeros(n, n);
    for v in 0..n {
        lap[(v, v)] = g.degree(v) as f64;
        for &u in g.neighbors(v) {
            lap[(v, u)] = -1.0;
        }
    }
    let eig = lap.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| (s.read(j), (0..n).map(|i| u.read(i, j)).collect()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let scale = pairs.last().map_or(1.0, |p| p.0.abs()).max(1.0);
    let tol = TIE_RTOL * scale;
    if pairs[1].0 <= tol {
        return Err(Error::Disconnected { components: 2 });
    }

    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut start = 1;
    while vectors.len() < k && start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[start].0 <= tol {
            end += 1;
        }
        let basis: Vec<&[f64]> = pairs[start..end].iter().map(|p| p.1.as_slice()).collect();
        let mut canon = canonical_basis(&basis);
        for v in &mut canon {
            fix_sign(v);
        }
        canon.sort_by(|a, b| lex_cmp(b, a));
        for v in canon {
            values.push(rayleigh_quotient(g, &v));
            vectors.push(v);
        }
        start = end;
    }
    values.truncate(k);
    vectors.truncate(k);
    Ok(Eigenpairs { values, vectors })
}

fn canonical_basis(basis: &[&[f64]]) -> Vec<Vec<f64>> {
    if basis.len() == 1 {
        return vec![basis[0].to_vec()];
    }
    let n = basis[0].len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for i in 0..n {
        if out.len() == basis.len() {
            break;
        }
        // projection of e_i onto span(basis)
        let mut p = vec![0.0; n];
        for b in basis {
            let c = b[i];
            for (pj, bj) in p.iter_mut().zip(b.iter()) {
                *pj += c * bj;
            }
        }
        for _ in 0..2 {
            for q in &out {
                let d = dot(&p, q);
                for (pj, qj) in p.iter_mut().zip(q) {
                    *pj -= d * qj;
                }
            }
        }
        let norm = dot(&p, &p).sqrt();
        if norm > 1e-6 {
            p.iter_mut().for_each(|x| *x /= norm);
            out.push(p);
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > ZERO_ENTRY) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > ZERO_ENTRY {
            return x.total_cmp(y);
        }
    }
    std::cmp::Ordering::Equal
}

fn rayleigh_quotient(g: &Graph, v: &[f64]) -> f64 {
    let mut num = 0.0;
    for e in g.edges() {
        let d = v[e.0] - v[e.1];
        num += d * d;
    }
    num / dot(v, v)
}

/// `max_i |(L v)_i - lambda v_i|`.
pub fn residual_inf(g: &Graph, lambda: f64, v: &[f64]) -> f64 {
    (0..g.n())
        .map(|i| {
            let lv = g.degree(i) as f64 * v[i] - g.neighbors(i).iter().map(|&j| v[j]).sum::<f64>();
            (lv - lambda * v[i]).abs()
        })
        .fold(0.0, f64::max)
}
