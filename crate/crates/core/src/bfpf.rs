//! Bi-focus attention biases for zero-inflated precipitation inputs.
//!
//! *Non-zero focus* raises the attention score of keys close to a dry/wet
//! boundary: every wet hour gets its distance to the nearest dry hour, turned
//! into a proximity weight `exp(-d / tau)` and added as `lambda * w` along the key
//! axis. Dry hours carry the sentinel distance and hence weight ~0.
//!
//! *Temporal focus* adds the linear recency profile `alpha * j / L_K`.
//!
//! Both biases depend only on the key index, are shared across heads and
//! queries, and are additive, so they commute. `lambda` and `alpha` are trained;
//! the distances are integer constants and receive no gradient.

use ndarray::{Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::attention::ScoreBias;

/// Distance assigned to dry hours and to a side without any dry hour, in hours.
pub const DEFAULT_SENTINEL: f64 = 1e4;

/// User-facing switches, read from the `[bfpf]` config table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BfpfConfig {
    pub enabled: bool,
    pub tau: f64,
    pub lambda_init: f64,
    pub alpha_init: f64,
    pub nonzero_focus: bool,
    pub temporal_focus: bool,
}

impl Default for BfpfConfig {
    fn default() -> Self {
        BfpfConfig {
            enabled: false,
            tau: 2.0,
            lambda_init: 0.1,
            alpha_init: 0.1,
            nonzero_focus: true,
            temporal_focus: true,
        }
    }
}

impl BfpfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("bfpf.tau must be > 0, got {}", self.tau)));
        }
        if !self.lambda_init.is_finite() || !self.alpha_init.is_finite() {
            return Err(Error::InvalidConfig("bfpf scale initializers must be finite".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> BfpfParams {
        BfpfParams {
            tau: self.tau,
            lambda_scale: self.lambda_init,
            alpha_scale: self.alpha_init,
            sentinel: DEFAULT_SENTINEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfpfParams {
    /// Decay temperature of the proximity weight, hours.
    pub tau: f64,
    pub lambda_scale: f64,
    pub alpha_scale: f64,
    pub sentinel: f64,
}

impl Default for BfpfParams {
    fn default() -> Self {
        BfpfConfig::default().params()
    }
}

/// Per-position distance to the nearest dry hour, computed with one forward and
/// one backward scan per row.
///
/// Dry positions get `sentinel`. A side with no dry hour contributes `sentinel`
/// to the minimum.
pub fn zero_distance(raw_tp: ArrayView2<'_, f64>, sentinel: f64) -> Array2<f64> {
    let (b, l) = raw_tp.dim();
    let mut d = Array2::from_elem((b, l), sentinel);
    for (x, mut out) in raw_tp.rows().into_iter().zip(d.rows_mut()) {
        let mut last_zero: Option<usize> = None;
        for t in 0..l {
            if x[t] == 0.0 {
                last_zero = Some(t);
            } else if let Some(z) = last_zero {
                out[t] = (t - z) as f64;
            }
        }
        let mut next_zero: Option<usize> = None;
        for t in (0..l).rev() {
            if x[t] == 0.0 {
                next_zero = Some(t);
            } else if let Some(z) = next_zero {
                out[t] = out[t].min((z - t) as f64);
            }
        }
    }
    d
}

/// `exp(-d / tau)`; sentinel distances underflow to 0.
pub fn proximity_weights(distances: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    distances.mapv(|d| (-d / tau).exp())
}

/// `p_j = j / L_K` for `j = 0..L_K`.
pub fn temporal_profile(l_k: usize) -> Vec<f64> {
    (0..l_k).map(|j| j as f64 / l_k as f64).collect()
}

/// Non-zero focus as an attention hook: `S += lambda * W[b, j]`.
#[derive(Debug, Clone)]
pub struct NonZeroFocus {
    /// B x L_K proximity weights.
    pub weights: Array2<f64>,
    pub lambda: f64,
}

impl NonZeroFocus {
    pub fn from_rainfall(raw_tp: ArrayView2<'_, f64>, params: &BfpfParams) -> Self {
        let d = zero_distance(raw_tp, params.sentinel);
        NonZeroFocus {
            weights: proximity_weights(d.view(), params.tau),
            lambda: params.lambda_scale,
        }
    }
}

impl ScoreBias for NonZeroFocus {
    fn scale(&self) -> f64 {
        self.lambda
    }

    fn key_profile(&self, batch: usize, l_k: usize) -> Result<Vec<f64>> {
        let (b, l) = self.weights.dim();
        if l != l_k || batch >= b {
            return Err(Error::ShapeMismatch(format!(
                "proximity weights {b}x{l} do not match batch {batch}, keys {l_k}"
            )));
        }
        Ok(self.weights.row(batch).to_vec())
    }
}

/// Temporal focus as an attention hook: `S += alpha * j / L_K`.
#[derive(Debug, Clone, Copy)]
pub struct TemporalFocus {
    pub alpha: f64,
}

impl ScoreBias for TemporalFocus {
    fn scale(&self) -> f64 {
        self.alpha
    }

    fn key_profile(&self, _batch: usize, l_k: usize) -> Result<Vec<f64>> {
        Ok(temporal_profile(l_k))
    }
}

/// Apply the non-zero focus bias to a B x H x L_Q x L_K score tensor.
pub fn nonzero_focus_hook(scores: &mut Array4<f64>, weights: ArrayView2<'_, f64>, lambda: f64) -> Result<()> {
    NonZeroFocus {
        weights: weights.to_owned(),
        lambda,
    }
    .apply(scores)
}

pub fn temporal_focus_hook(scores: &mut Array4<f64>, alpha: f64) -> Result<()> {
    TemporalFocus { alpha }.apply(scores)
}

#[cfg(test)]
pub(crate) fn zero_distance_brute(x: &[f64], sentinel: f64) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if x[t] == 0.0 {
                return sentinel;
            }
            let left = (0..t).rev().find(|&z| x[z] == 0.0).map_or(sentinel, |z| (t - z) as f64);
            let right = (t + 1..x.len())
                .find(|&z| x[z] == 0.0)
                .map_or(sentinel, |z| (z - t) as f64);
            left.min(right)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::attention::{attention_forward, softmax_keys};
    use ndarray::{array, Array};

    const S: f64 = DEFAULT_SENTINEL;

    #[test]
    fn distance_examples() {
        let d = zero_distance(array![[0.0, 2.0, 3.0, 0.0, 5.0]].view(), S);
        assert_eq!(d.row(0).to_vec(), vec![S, 1.0, 1.0, S, 1.0]);
        let d = zero_distance(array![[0.0, 0.0, 0.0]].view(), S);
        assert_eq!(d.row(0).to_vec(), vec![S; 3]);
        let d = zero_distance(array![[5.0, 7.0]].view(), S);
        assert_eq!(d.row(0).to_vec(), vec![S, S]);
    }

    #[test]
    fn distance_matches_brute_force_rows() {
        let x = array![[0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 2.0], [3.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]];
        let d = zero_distance(x.view(), S);
        for (row, out) in x.rows().into_iter().zip(d.rows()) {
            assert_eq!(out.to_vec(), zero_distance_brute(&row.to_vec(), S));
        }
        assert_eq!(d.row(0).to_vec(), vec![S, 1.0, 2.0, 2.0, 1.0, S, 1.0]);
    }

    #[test]
    fn proximity_weight_values() {
        let w = proximity_weights(array![[1.0, S]].view(), 1.0);
        assert!((w[[0, 0]] - 0.36788).abs() < 1e-5);
        assert!(w[[0, 1]].abs() < 1e-300);
        let w = proximity_weights(array![[2.0]].view(), 2.0);
        assert!((w[[0, 0]] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn nonzero_focus_examples() {
        let mut s = Array4::zeros((1, 1, 1, 2));
        nonzero_focus_hook(&mut s, array![[0.0, 1.0]].view(), 3f64.ln()).unwrap();
        softmax_keys(&mut s);
        assert!((s[[0, 0, 0, 0]] - 0.25).abs() < 1e-15);
        assert!((s[[0, 0, 0, 1]] - 0.75).abs() < 1e-15);

        let base = Array::from_shape_fn((2, 3, 4, 4), |(a, b, c, d)| (a + 2 * b + 3 * c + 5 * d) as f64 * 0.1);
        let mut s = base.clone();
        nonzero_focus_hook(&mut s, Array2::from_elem((2, 4), 0.7).view(), 0.0).unwrap();
        assert_eq!(s, base);

        // dry window: bias vanishes
        let focus = NonZeroFocus::from_rainfall(Array2::zeros((2, 4)).view(), &BfpfParams::default());
        let mut s = base.clone();
        focus.apply(&mut s).unwrap();
        assert_eq!(s, base);

        let mut s = base.clone();
        assert!(nonzero_focus_hook(&mut s, Array2::zeros((2, 3)).view(), 1.0).is_err());
    }

    #[test]
    fn temporal_focus_examples() {
        assert_eq!(temporal_profile(4), vec![0.0, 0.25, 0.5, 0.75]);
        let mut s = Array4::zeros((1, 1, 1, 4));
        temporal_focus_hook(&mut s, 1.0).unwrap();
        assert_eq!(s.iter().copied().collect::<Vec<_>>(), vec![0.0, 0.25, 0.5, 0.75]);

        let mut s = Array4::from_elem((1, 2, 3, 4), 0.4);
        temporal_focus_hook(&mut s, 0.0).unwrap();
        assert!(s.iter().all(|&v| v == 0.4));

        let mut s = Array4::zeros((1, 1, 1, 6));
        temporal_focus_hook(&mut s, 0.8).unwrap();
        softmax_keys(&mut s);
        let w: Vec<f64> = s.iter().copied().collect();
        assert!(w.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn hooks_commute() {
        let raw = array![[0.0, 1.5, 0.2, 0.0, 0.0, 4.0]];
        let nz = NonZeroFocus::from_rainfall(raw.view(), &BfpfParams::default());
        let tf = TemporalFocus { alpha: 0.9 };
        let q = Array::from_shape_fn((1, 2, 6, 3), |(_, h, i, d)| ((h + i * d) as f64).sin());
        let k = Array::from_shape_fn((1, 2, 6, 3), |(_, h, i, d)| ((h * i + d) as f64).cos());
        let a = attention_forward(q.view(), k.view(), q.view(), &[&nz, &tf]).unwrap();
        let b = attention_forward(q.view(), k.view(), q.view(), &[&tf, &nz]).unwrap();
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
