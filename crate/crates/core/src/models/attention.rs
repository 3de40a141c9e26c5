//! Scaled dot-product attention with additive score hooks.

use ndarray::{s, Array2, Array4, ArrayView4, Axis};

use super::autodiff::softmax_in_place;
use crate::error::{Error, Result};

/// An additive modifier of attention scores that depends only on the key index:
/// `S[b, h, i, j] += scale * profile_b[j]`.
///
/// The same definition drives both the standalone [`attention_forward`] and the
/// differentiable transformer, where `scale` is a trained parameter.
pub trait ScoreBias {
    fn scale(&self) -> f64;

    /// Unscaled bias over the key axis for batch element `batch`.
    fn key_profile(&self, batch: usize, l_k: usize) -> Result<Vec<f64>>;

    fn apply(&self, scores: &mut Array4<f64>) -> Result<()> {
        let (b, _, _, l_k) = scores.dim();
        let scale = self.scale();
        for bi in 0..b {
            let profile = self.key_profile(bi, l_k)?;
            let mut slab = scores.index_axis_mut(Axis(0), bi);
            for mut row in slab.lanes_mut(Axis(2)) {
                for (s, p) in row.iter_mut().zip(&profile) {
                    *s += scale * p;
                }
            }
        }
        Ok(())
    }
}

/// Arbitrary per-key bias, mostly useful for tests and ad-hoc masks.
#[derive(Debug, Clone)]
pub struct KeyBias {
    /// B x L_K (or 1 x L_K to broadcast over the batch).
    pub bias: Array2<f64>,
}

impl ScoreBias for KeyBias {
    fn scale(&self) -> f64 {
        1.0
    }

    fn key_profile(&self, batch: usize, l_k: usize) -> Result<Vec<f64>> {
        let (rows, cols) = self.bias.dim();
        if cols != l_k || (rows != 1 && batch >= rows) {
            return Err(Error::ShapeMismatch(format!(
                "bias {rows}x{cols} not broadcastable to batch {batch}, keys {l_k}"
            )));
        }
        Ok(self.bias.row(if rows == 1 { 0 } else { batch }).to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// B x H x L_Q x d_head
    pub context: Array4<f64>,
    /// B x H x L_Q x L_K post-softmax weights
    pub weights: Array4<f64>,
}

/// Raw scores `Q K^T / sqrt(d_head)`, shape B x H x L_Q x L_K.
pub fn attention_scores(q: ArrayView4<'_, f64>, k: ArrayView4<'_, f64>) -> Result<Array4<f64>> {
    let (b, h, lq, d) = q.dim();
    let (kb, kh, lk, kd) = k.dim();
    if (b, h, d) != (kb, kh, kd) {
        return Err(Error::ShapeMismatch(format!("q {:?} vs k {:?}", q.dim(), k.dim())));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut s = Array4::zeros((b, h, lq, lk));
    for bi in 0..b {
        for hi in 0..h {
            let qm = q.slice(s![bi, hi, .., ..]);
            let km = k.slice(s![bi, hi, .., ..]);
            s.slice_mut(s![bi, hi, .., ..]).assign(&(qm.dot(&km.t()) * scale));
        }
    }
    Ok(s)
}

/// Softmax over the key axis, in place.
pub fn softmax_keys(scores: &mut Array4<f64>) {
    for mut row in scores.lanes_mut(Axis(3)) {
        let slice = row.as_slice_mut().expect("standard layout");
        softmax_in_place(slice);
    }
}

/// `softmax(Q K^T / sqrt(d) + sum of hook biases) V`.
pub fn attention_forward(
    q: ArrayView4<'_, f64>,
    k: ArrayView4<'_, f64>,
    v: ArrayView4<'_, f64>,
    hooks: &[&dyn ScoreBias],
) -> Result<AttentionOutput> {
    let mut scores = attention_scores(q, k)?;
    let (b, h, _, lk) = scores.dim();
    let (vb, vh, vl, _) = v.dim();
    if (vb, vh, vl) != (b, h, lk) {
        return Err(Error::ShapeMismatch(format!(
            "v {:?} vs scores {:?}",
            v.dim(),
            scores.dim()
        )));
    }
    for hook in hooks {
        hook.apply(&mut scores)?;
    }
    softmax_keys(&mut scores);
    let (_, _, lq, _) = scores.dim();
    let dv = v.dim().3;
    let mut context = Array4::zeros((b, h, lq, dv));
    for bi in 0..b {
        for hi in 0..h {
            let w = scores.slice(s![bi, hi, .., ..]);
            let vm = v.slice(s![bi, hi, .., ..]);
            context.slice_mut(s![bi, hi, .., ..]).assign(&w.dot(&vm));
        }
    }
    Ok(AttentionOutput {
        context,
        weights: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Seed;
    use ndarray::Array;
    use rand::Rng;

    fn random(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut rng = Seed(seed).rng();
        Array::from_shape_fn(shape, |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn no_hooks_is_plain_attention() {
        let q = random((1, 1, 2, 3), 1);
        let k = random((1, 1, 4, 3), 2);
        let v = random((1, 1, 4, 2), 3);
        let out = attention_forward(q.view(), k.view(), v.view(), &[]).unwrap();
        // direct computation for query 0
        let qm = q.slice(s![0, 0, .., ..]);
        let km = k.slice(s![0, 0, .., ..]);
        let mut row: Vec<f64> = (0..4).map(|j| qm.row(0).dot(&km.row(j)) / 3f64.sqrt()).collect();
        softmax_in_place(&mut row);
        let expect: f64 = (0..4).map(|j| row[j] * v[[0, 0, j, 1]]).sum();
        assert!((out.context[[0, 0, 0, 1]] - expect).abs() < 1e-14);
    }

    #[test]
    fn constant_bias_is_invisible() {
        let q = random((2, 2, 5, 4), 4);
        let k = random((2, 2, 5, 4), 5);
        let v = random((2, 2, 5, 3), 6);
        let plain = attention_forward(q.view(), k.view(), v.view(), &[]).unwrap();
        let c = KeyBias {
            bias: Array2::from_elem((1, 5), 3.7),
        };
        let shifted = attention_forward(q.view(), k.view(), v.view(), &[&c]).unwrap();
        for (a, b) in plain.weights.iter().zip(shifted.weights.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in plain.context.iter().zip(shifted.context.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        for row in plain.weights.lanes(Axis(3)) {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn log_three_bias_gives_quarter_split() {
        let q = Array4::zeros((1, 1, 1, 2));
        let k = Array4::zeros((1, 1, 2, 2));
        let v = Array4::zeros((1, 1, 2, 1));
        let hook = KeyBias {
            bias: ndarray::array![[0.0, 3f64.ln()]],
        };
        let out = attention_forward(q.view(), k.view(), v.view(), &[&hook]).unwrap();
        assert!((out.weights[[0, 0, 0, 0]] - 0.25).abs() < 1e-15);
        assert!((out.weights[[0, 0, 0, 1]] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mis_shaped_hook_is_rejected() {
        let q = Array4::zeros((1, 1, 2, 2));
        let hook = KeyBias {
            bias: Array2::zeros((1, 3)),
        };
        assert!(attention_forward(q.view(), q.view(), q.view(), &[&hook]).is_err());
    }
}
