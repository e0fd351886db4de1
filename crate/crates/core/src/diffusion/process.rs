//! Forward noising kernels and the closed-form posterior used by the
//! reverse process.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;

/// Cumulative signal levels `alpha_bar[0..=T]` with `alpha_bar[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bar_t = f(t) / f(0)`, `f(t) = cos^2(pi/2 * (t/T + s) / (1 + s))`.
    pub fn cosine(t_max: usize) -> Self {
        if t_max == 0 {
            return NoiseSchedule { alpha_bar: vec![1.0] };
        }
        let f = |t: usize| {
            let x = (t as f64 / t_max as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
        };
        let f0 = f(0);
        let mut alpha_bar: Vec<f64> = (0..=t_max).map(|t| f(t) / f0).collect();
        alpha_bar[0] = 1.0;
        NoiseSchedule { alpha_bar }
    }

    pub fn t_max(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// One-step signal level `alpha_bar_t / alpha_bar_{t-1}`, `t >= 1`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bar[t] / self.alpha_bar[t - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    /// Noise towards the empirical state marginal.
    Marginal,
    /// Noise towards the empty graph.
    Absorbing,
}

impl std::str::FromStr for TransitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(TransitionKind::Marginal),
            "absorbing" => Ok(TransitionKind::Absorbing),
            _ => Err(Error::invalid(format!(
                "unknown transition {s:?} (expected marginal or absorbing)"
            ))),
        }
    }
}

/// Reference distributions the forward process converges to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub kind: TransitionKind,
    /// Over `[absent, present]`.
    pub m_edge: [f64; 2],
    /// Over node label classes; empty when labels are not modelled.
    pub m_node: Vec<f64>,
}

impl Transition {
    /// `edge_density` is the fraction of node pairs that are edges;
    /// `label_freq` the label class frequencies (empty for unlabelled).
    pub fn new(kind: TransitionKind, edge_density: f64, label_freq: &[f64]) -> Self {
        let m_edge = match kind {
            TransitionKind::Marginal => [1.0 - edge_density, edge_density],
            TransitionKind::Absorbing => [1.0, 0.0],
        };
        let m_node = match kind {
            TransitionKind::Marginal => label_freq.to_vec(),
            TransitionKind::Absorbing if label_freq.is_empty() => Vec::new(),
            // labels have no "absent" state, so they always use the marginal
            TransitionKind::Absorbing => label_freq.to_vec(),
        };
        Transition { kind, m_edge, m_node }
    }
}

/// Row `from` of `Qbar = a I + (1 - a) 1 m^T`.
pub fn kernel_row(a: f64, m: &[f64], from: usize) -> Vec<f64> {
    m.iter()
        .enumerate()
        .map(|(k, &mk)| (1.0 - a) * mk + if k == from { a } else { 0.0 })
        .collect()
}

/// Draws a state from a categorical distribution.
pub fn draw(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // rounding left a sliver above the last cumulative value
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// `p(e_{t-1} = k | e_t, p_hat) ∝ Q_t[k, e_t] * (p_hat^T Qbar_{t-1})[k]`
/// where `alpha = alpha_t` and `alpha_bar_prev = alpha_bar_{t-1}`.
/// `index` only labels errors.
pub fn posterior(p_hat: &[f64], e_t: usize, alpha: f64, alpha_bar_prev: f64, m: &[f64], index: usize) -> Result<Vec<f64>> {
    let sum: f64 = p_hat.iter().sum();
    if !(sum - 1.0).abs().le(&1e-9) || p_hat.iter().any(|&p| p < 0.0) {
        return Err(Error::NotNormalized { index, sum });
    }
    let mut out: Vec<f64> = (0..m.len())
        .map(|k| {
            let step = (1.0 - alpha) * m[e_t] + if k == e_t { alpha } else { 0.0 };
            let prior = alpha_bar_prev * p_hat[k] + (1.0 - alpha_bar_prev) * m[k];
            step * prior
        })
        .collect();
    let z: f64 = out.iter().sum();
    if z > 0.0 && z.is_finite() {
        out.iter_mut().for_each(|x| *x /= z);
    } else {
        // no state at t-1 can produce e_t under p_hat: stay put
        out.iter_mut().enumerate().for_each(|(k, x)| *x = f64::from(u8::from(k == e_t)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_shape() {
        let s = NoiseSchedule::cosine(500);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar.iter().all(|&a| a > 0.0 && a <= 1.0));
        assert!(s.alpha_bar(500) < 1e-20);
        assert_eq!(NoiseSchedule::cosine(0).t_max(), 0);
    }

    /// Explicit 2x2 matrices multiplied out.
    fn posterior_by_matrices(p_hat: [f64; 2], e_t: usize, a: f64, ab_prev: f64, m: [f64; 2]) -> [f64; 2] {
        let q = |c: f64, i: usize, j: usize| c * f64::from(u8::from(i == j)) + (1.0 - c) * m[j];
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let mut prior = 0.0;
            for (e0, p) in p_hat.iter().enumerate() {
                prior += p * q(ab_prev, e0, k);
            }
            *o = q(a, k, e_t) * prior;
        }
        let z = out[0] + out[1];
        [out[0] / z, out[1] / z]
    }

    #[test]
    fn marginal_posterior_matches_matrix_product() {
        let m = [0.7, 0.3];
        for e_t in 0..2 {
            // alpha_t = 1 when alpha_bar_t = alpha_bar_{t-1}
            let got = posterior(&[0.5, 0.5], e_t, 1.0, 0.4, &m, 0).unwrap();
            let want = posterior_by_matrices([0.5, 0.5], e_t, 1.0, 0.4, m);
            assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
            assert_eq!(got[e_t], 1.0);
            let got = posterior(&[0.2, 0.8], e_t, 0.9, 0.6, &m, 0).unwrap();
            let want = posterior_by_matrices([0.2, 0.8], e_t, 0.9, 0.6, m);
            assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn absorbing_posterior_by_hand() {
        // e_t absent, p_hat(present) = 1, alpha_t = 0.8, alpha_bar_{t-1} = 0.5:
        // absent:  Q_t[0,0] = 1,   prior(0) = 0.5 * 0 + 0.5 * 1 = 0.5 -> 0.5
        // present: Q_t[1,0] = 0.2, prior(1) = 0.5 * 1 + 0.5 * 0 = 0.5 -> 0.1
        let got = posterior(&[0.0, 1.0], 0, 0.8, 0.5, &[1.0, 0.0], 0).unwrap();
        assert!((got[0] - 0.5 / 0.6).abs() < 1e-15);
        assert!((got[1] - 0.1 / 0.6).abs() < 1e-15);
    }

    #[test]
    fn identity_limit() {
        let got = posterior(&[0.0, 1.0], 0, 0.3, 1.0, &[0.6, 0.4], 0).unwrap();
        assert!((got[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalised() {
        assert!(matches!(
            posterior(&[0.5, 0.6], 0, 0.5, 0.5, &[0.5, 0.5], 7),
            Err(Error::NotNormalized { index: 7, .. })
        ));
    }
}
