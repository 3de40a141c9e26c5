use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential fit `rho(k) ~ exp(-lambda * k)` of an autocorrelation profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Lags used in the fit (positive autocorrelations only).
    pub lags: Vec<usize>,
    pub rho: Vec<f64>,
    pub lambda_hat: f64,
    pub fit_r2: f64,
    /// Lags dropped because their autocorrelation was not positive.
    pub excluded: usize,
}

/// Sample lag-`k` autocorrelation, normalized by the full-sample sum of squares.
pub fn autocorrelation(x: &[f64], k: usize) -> Result<f64> {
    if k == 0 || x.len() <= k {
        return Err(Error::ShapeMismatch(format!(
            "lag {k} needs 1 <= k < len ({})",
            x.len()
        )));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::ConstantSeries);
    }
    let num: f64 = x.iter().zip(&x[k..]).map(|(a, b)| (a - mean) * (b - mean)).sum();
    Ok(num / denom)
}

/// Fit `lambda` by least squares of `-ln rho(k)` on `k` through the origin.
/// `rhos[i]` is the autocorrelation at lag `i + 1`.
pub fn fit_decay_lambda(rhos: &[f64]) -> Result<DecayFit> {
    let (lags, rho): (Vec<usize>, Vec<f64>) = rhos
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 0.0)
        .map(|(i, &r)| (i + 1, r))
        .unzip();
    if lags.len() < 2 {
        return Err(Error::InsufficientDecayPoints(lags.len()));
    }
    let y: Vec<f64> = rho.iter().map(|r| -r.ln()).collect();
    let sxx: f64 = lags.iter().map(|&k| (k * k) as f64).sum();
    let sxy: f64 = lags.iter().zip(&y).map(|(&k, y)| k as f64 * y).sum();
    let lambda_hat = sxy / sxx;

    let ss_res: f64 = lags
        .iter()
        .zip(&y)
        .map(|(&k, y)| (y - lambda_hat * k as f64).powi(2))
        .sum();
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let fit_r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };

    Ok(DecayFit {
        excluded: rhos.len() - lags.len(),
        lags,
        rho,
        lambda_hat,
        fit_r2,
    })
}
