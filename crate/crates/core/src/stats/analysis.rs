//! Per-station diagnostic summary, as emitted by the `analyze` command.

use serde::{Deserialize, Serialize};

use super::{adf_test, autocorrelation, correlation_matrix, fit_decay_lambda, zero_inflation_ratio};
use super::{AdfConfig, CorrelationMethod};
use crate::error::Result;
use crate::types::{StationSeries, VARIABLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Autocorrelation lags `1..=max_decay_lag` for the decay fit.
    pub max_decay_lag: usize,
    pub adf: AdfConfig,
    /// Restrict the unit-root test to `[start, start + len)` of the precipitation series.
    pub adf_segment: Option<(usize, usize)>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            max_decay_lag: 24,
            adf: AdfConfig::default(),
            adf_segment: None,
        }
    }
}

/// A computed value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reported<T> {
    Value(T),
    Failed { error: String },
}

impl<T> From<Result<T>> for Reported<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Reported::Value(v),
            Err(e) => Reported::Failed { error: e.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub lambda: f64,
    pub r2: f64,
    pub rho: Vec<f64>,
    /// Lags dropped from the fit for non-positive autocorrelation.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfSummary {
    pub t: f64,
    pub p: f64,
    pub lag: usize,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub variables: Vec<String>,
    pub pearson: Vec<Vec<Option<f64>>>,
    pub kendall: Vec<Vec<Option<f64>>>,
    pub spearman: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationAnalysis {
    pub station_id: String,
    pub n_hours: usize,
    pub zero_inflation: f64,
    pub decay: Reported<DecaySummary>,
    pub adf: Reported<AdfSummary>,
    pub correlations: Reported<Correlations>,
}

fn decay(tp: &[f64], max_lag: usize) -> Result<DecaySummary> {
    let rho = (1..=max_lag)
        .map(|k| autocorrelation(tp, k))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_decay_lambda(&rho)?;
    Ok(DecaySummary {
        lambda: fit.lambda_hat,
        r2: fit.fit_r2,
        rho,
        excluded: fit.excluded,
    })
}

/// Zero inflation, decay and unit-root test on precipitation, and the three
/// correlation matrices over all six variables.
pub fn analyze_station(series: &StationSeries, cfg: &AnalysisConfig) -> Result<StationAnalysis> {
    let tp = series.tp().to_vec();
    let segment = match cfg.adf_segment {
        Some((start, len)) => tp.get(start..start + len).unwrap_or(&[]),
        None => &tp[..],
    };
    let correlations = || -> Result<Correlations> {
        let m = |method| correlation_matrix(series.data.view(), method).map(|c| c.matrix);
        Ok(Correlations {
            variables: VARIABLES.iter().map(|v| v.to_string()).collect(),
            pearson: m(CorrelationMethod::Pearson)?,
            kendall: m(CorrelationMethod::Kendall)?,
            spearman: m(CorrelationMethod::Spearman)?,
        })
    };
    Ok(StationAnalysis {
        station_id: series.meta.station_id.clone(),
        n_hours: tp.len(),
        zero_inflation: zero_inflation_ratio(&tp)?,
        decay: decay(&tp, cfg.max_decay_lag).into(),
        adf: adf_test(segment, &cfg.adf)
            .map(|r| AdfSummary {
                t: r.t_stat,
                p: r.p_value,
                lag: r.lag_used,
                n_obs: r.n_obs,
            })
            .into(),
        correlations: correlations().into(),
    })
}
