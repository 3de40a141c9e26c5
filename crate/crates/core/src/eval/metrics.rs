//! Point-error metrics in physical units, over all windows and output steps jointly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hourly rainfall strictly above `threshold` (mm/h) is an extreme event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremeConfig {
    pub threshold: f64,
}

impl Default for ExtremeConfig {
    fn default() -> Self {
        ExtremeConfig { threshold: 4.0 }
    }
}

impl ExtremeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold > 0.0 && self.threshold.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "extreme threshold must be > 0, got {}",
                self.threshold
            )))
        }
    }
}

fn check(y_hat: &[f64], y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    if y_hat.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} targets",
            y_hat.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn mse(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check(y_hat, y)?;
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check(y_hat, y)?;
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Indices of ground-truth extremes.
pub fn extreme_mask(y: &[f64], cfg: &ExtremeConfig) -> Vec<usize> {
    (0..y.len()).filter(|&t| y[t] > cfg.threshold).collect()
}

fn restricted(y_hat: &[f64], y: &[f64], e: &[usize], f: impl Fn(f64) -> f64) -> Option<f64> {
    if e.is_empty() {
        return None;
    }
    Some(e.iter().map(|&t| f(y_hat[t] - y[t])).sum::<f64>() / e.len() as f64)
}

/// Squared error over the extreme set; `None` when the set is empty.
pub fn eere(y_hat: &[f64], y: &[f64], e: &[usize]) -> Option<f64> {
    restricted(y_hat, y, e, |d| d * d)
}

/// Absolute error over the extreme set; `None` when the set is empty.
pub fn aeere(y_hat: &[f64], y: &[f64], e: &[usize]) -> Option<f64> {
    restricted(y_hat, y, e, f64::abs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    pub eere: Option<f64>,
    pub aeere: Option<f64>,
    pub n_points: usize,
    pub n_extreme: usize,
    pub extreme_defined: bool,
}

impl MetricSet {
    pub fn compute(y_hat: &[f64], y: &[f64], cfg: &ExtremeConfig) -> Result<Self> {
        let e = extreme_mask(y, cfg);
        Ok(MetricSet {
            mse: mse(y_hat, y)?,
            mae: mae(y_hat, y)?,
            eere: eere(y_hat, y, &e),
            aeere: aeere(y_hat, y, &e),
            n_points: y.len(),
            n_extreme: e.len(),
            extreme_defined: !e.is_empty(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(mse(&[1., 2.], &[0., 2.]).unwrap(), 0.5);
        assert_eq!(mae(&[1., 2.], &[0., 2.]).unwrap(), 0.5);
        assert_eq!(mse(&[0.; 3], &[3., 0., 0.]).unwrap(), 3.0);
        assert_eq!(mae(&[0.; 3], &[3., 0., 0.]).unwrap(), 1.0);
        let cfg = ExtremeConfig::default();
        let y = [5., 3., 6.];
        let e = extreme_mask(&y, &cfg);
        assert_eq!(e, vec![0, 2]);
        assert_eq!(eere(&[4., 3., 8.], &y, &e), Some(2.5));
        assert_eq!(aeere(&[4., 3., 8.], &y, &e), Some(1.5));
        assert!(extreme_mask(&[4.0], &cfg).is_empty());
        assert_eq!(extreme_mask(&[4.0 + 1e-9], &cfg), vec![0]);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(mse(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        let m = MetricSet::compute(&[0.0; 4], &[0.0; 4], &ExtremeConfig::default()).unwrap();
        assert!(!m.extreme_defined && m.eere.is_none() && m.n_extreme == 0);
    }
}
