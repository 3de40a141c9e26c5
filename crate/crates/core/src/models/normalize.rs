use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::types::{N_VARS, TP};

/// Per-variable z-scoring with statistics from the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; N_VARS],
    pub std: [f64; N_VARS],
    /// Variables with zero spread on the training rows; their std is clamped to 1.
    pub constant: [bool; N_VARS],
}

impl Normalizer {
    pub fn fit(data: ArrayView2<'_, f64>, rows: Range<usize>) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; N_VARS];
        let mut std = [1.0; N_VARS];
        let mut constant = [false; N_VARS];
        for c in 0..N_VARS {
            let col = data.column(c);
            let m = rows.clone().map(|i| col[i]).sum::<f64>() / n;
            let var = rows.clone().map(|i| (col[i] - m).powi(2)).sum::<f64>() / n;
            mean[c] = m;
            if var.sqrt() > 1e-12 {
                std[c] = var.sqrt();
            } else {
                constant[c] = true;
            }
        }
        Normalizer { mean, std, constant }
    }

    pub fn transform(&self, var: usize, v: f64) -> f64 {
        (v - self.mean[var]) / self.std[var]
    }

    pub fn inverse(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }

    pub fn transform_rows(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.transform(c, *v);
            }
        }
        out
    }

    pub fn target(&self) -> TargetScale {
        TargetScale {
            mean: self.mean[TP],
            std: self.std[TP],
        }
    }
}

/// Affine map between precipitation in mm/h and the normalized training target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetScale {
    fn default() -> Self {
        TargetScale { mean: 0.0, std: 1.0 }
    }
}

impl TargetScale {
    pub fn normalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    /// Back to mm/h, clamped at zero.
    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| (v * self.std + self.mean).max(0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_column_flagged() {
        let mut d = Array2::zeros((10, N_VARS));
        for i in 0..10 {
            d[[i, 0]] = i as f64;
        }
        let n = Normalizer::fit(d.view(), 0..7);
        assert_eq!(n.mean[0], 3.0);
        assert!(n.constant[1] && !n.constant[0]);
        assert_eq!(n.std[1], 1.0);
    }

    proptest! {
        #[test]
        fn inverse_of_transform(v in -1e4f64..1e4, m in -100.0f64..100.0, s in 0.01f64..100.0) {
            let n = Normalizer { mean: [m; N_VARS], std: [s; N_VARS], constant: [false; N_VARS] };
            let back = n.inverse(2, n.transform(2, v));
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}
