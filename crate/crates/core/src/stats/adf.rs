//! Augmented Dickey-Fuller unit-root test.
//!
//! Regression of `dx_t` on `[x_{t-1}, 1, t, dx_{t-1}, .., dx_{t-p}]` by QR least
//! squares. Lag order is selected by AIC on a common estimation sample, then the
//! chosen order is refit on its maximal sample. P-values use MacKinnon's (1994)
//! asymptotic response surfaces for a single I(1) series.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfConfig {
    pub max_lag: usize,
    /// Include the linear trend term (constant is always included).
    pub include_trend: bool,
    pub significance: f64,
}

impl Default for AdfConfig {
    fn default() -> Self {
        AdfConfig {
            max_lag: 12,
            include_trend: true,
            significance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub gamma_hat: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub lag_used: usize,
    pub n_obs: usize,
}

impl AdfResult {
    pub fn rejects_unit_root(&self, significance: f64) -> bool {
        self.p_value < significance
    }
}

struct Surface {
    min: f64,
    max: f64,
    star: f64,
    small_p: [f64; 3],
    large_p: [f64; 4],
}

// N = 1 rows of the MacKinnon (1994) tables, scaling already applied.
const SURFACE_C: Surface = Surface {
    min: -18.83,
    max: 2.74,
    star: -1.61,
    small_p: [2.1659, 1.4412, 3.8269e-2],
    large_p: [1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2],
};

const SURFACE_CT: Surface = Surface {
    min: -16.18,
    max: 0.7,
    star: -2.89,
    small_p: [3.2512, 1.6047, 4.9588e-2],
    large_p: [2.5261, 6.1654e-1, -3.7956e-1, -6.0285e-2],
};

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn polyval(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Approximate p-value of an ADF t-statistic.
pub fn mackinnon_p_value(t_stat: f64, include_trend: bool) -> f64 {
    let s = if include_trend { &SURFACE_CT } else { &SURFACE_C };
    if t_stat > s.max {
        1.0
    } else if t_stat < s.min {
        0.0
    } else if t_stat <= s.star {
        std_normal_cdf(polyval(&s.small_p, t_stat))
    } else {
        std_normal_cdf(polyval(&s.large_p, t_stat))
    }
}

struct OlsFit {
    beta: DVector<f64>,
    se0: f64,
    ssr: f64,
    nobs: usize,
}

/// Design for lag order `lag` using rows whose response index is `>= first`.
fn design(x: &[f64], dx: &[f64], lag: usize, first: usize, trend: bool) -> (DMatrix<f64>, DVector<f64>) {
    let rows = dx.len() - first;
    let k = 2 + usize::from(trend) + lag;
    let mut m = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    for r in 0..rows {
        let t = first + r;
        y[r] = dx[t];
        m[(r, 0)] = x[t];
        m[(r, 1)] = 1.0;
        let mut c = 2;
        if trend {
            m[(r, c)] = (t + 1) as f64;
            c += 1;
        }
        for j in 1..=lag {
            m[(r, c)] = dx[t - j];
            c += 1;
        }
    }
    (m, y)
}

fn ols(m: DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = m.shape();
    if n <= k {
        return Err(Error::DegenerateRegression);
    }
    let col_norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let qr = m.clone().qr();
    let r = qr.r();
    for (i, norm) in col_norms.iter().enumerate() {
        if *norm == 0.0 || r[(i, i)].abs() <= 1e-10 * norm {
            return Err(Error::DegenerateRegression);
        }
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::DegenerateRegression)?;
    let resid = y - &m * &beta;
    let ssr = resid.norm_squared();
    let sigma2 = ssr / (n - k) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::DegenerateRegression)?;
    let var0: f64 = r_inv.row(0).iter().map(|v| v * v).sum::<f64>() * sigma2;
    if var0 <= 0.0 || !var0.is_finite() {
        return Err(Error::DegenerateRegression);
    }
    Ok(OlsFit {
        beta,
        se0: var0.sqrt(),
        ssr,
        nobs: n,
    })
}

/// Run the ADF test on `segment`.
pub fn adf_test(segment: &[f64], cfg: &AdfConfig) -> Result<AdfResult> {
    let n = segment.len();
    if n <= cfg.max_lag + 4 {
        return Err(Error::InsufficientLength {
            have: n,
            need: cfg.max_lag + 5,
        });
    }
    let trend = cfg.include_trend;
    let dx: Vec<f64> = segment.windows(2).map(|w| w[1] - w[0]).collect();
    let base_k = 2 + usize::from(trend);
    // keep at least one residual degree of freedom at the largest lag
    let max_lag = cfg.max_lag.min((dx.len().saturating_sub(base_k + 1)) / 2);

    let mut best = (f64::INFINITY, 0usize);
    for lag in 0..=max_lag {
        let (m, y) = design(segment, &dx, lag, max_lag, trend);
        let fit = ols(m, &y)?;
        let nobs = fit.nobs as f64;
        let aic = nobs * (fit.ssr / nobs).ln() + 2.0 * (base_k + lag) as f64;
        if aic < best.0 {
            best = (aic, lag);
        }
    }
    let lag = best.1;
    let (m, y) = design(segment, &dx, lag, lag, trend);
    let fit = ols(m, &y)?;
    let gamma_hat = fit.beta[0];
    let t_stat = gamma_hat / fit.se0;
    Ok(AdfResult {
        gamma_hat,
        t_stat,
        p_value: mackinnon_p_value(t_stat, trend),
        lag_used: lag,
        n_obs: fit.nobs,
    })
}
