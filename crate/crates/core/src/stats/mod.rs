//! Zero inflation, temporal decay, non-stationarity and correlation structure.

mod adf;
mod analysis;
mod autocorr;
mod correlation;

pub use adf::{adf_test, mackinnon_p_value, AdfConfig, AdfResult};
pub use analysis::{
    analyze_station, AdfSummary, AnalysisConfig, Correlations, DecaySummary, Reported, StationAnalysis,
};
pub use autocorr::{autocorrelation, fit_decay_lambda, DecayFit};
pub use correlation::{
    average_ranks, correlation_matrix, kendall_tau_b, pearson, spearman, CorrelationMatrix, CorrelationMethod,
};

use crate::error::{Error, Result};

/// Fraction of hours with exactly zero precipitation.
pub fn zero_inflation_ratio(tp: &[f64]) -> Result<f64> {
    if tp.is_empty() {
        return Err(Error::Empty("precipitation column"));
    }
    let zeros = tp.iter().filter(|&&v| v == 0.0).count();
    Ok(zeros as f64 / tp.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_inflation_examples() {
        assert_eq!(zero_inflation_ratio(&[0.0, 0.0, 1.0, 0.0]).unwrap(), 0.75);
        assert_eq!(zero_inflation_ratio(&[0.0; 17]).unwrap(), 1.0);
        assert!(zero_inflation_ratio(&[]).is_err());
    }

    #[test]
    fn hkst_record_count() {
        let mut tp = vec![0.0; 43_313];
        tp.extend(std::iter::repeat_n(0.3, 52_585 - 43_313));
        let r = zero_inflation_ratio(&tp).unwrap();
        assert!((r - 43_313.0 / 52_585.0).abs() < 1e-15);
        assert_eq!(format!("{:.1}", r * 100.0), "82.4");
    }
}
