//! Local-file ingestion and spatio-temporal alignment onto the hourly station grid.

mod align;
mod files;
mod grid;
mod resample;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use align::{align_station, qc_fill};
pub use files::{
    parse_station_csv, read_aligned_csv, read_grid_csv, write_aligned_csv, write_grid_csv, write_station_csv,
};
pub use grid::{bilinear_sample, nearest_sample, GridField};
pub use resample::{completeness, resample_to_hourly};

/// Native-resolution samples of one variable, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSamples {
    pub variable: String,
    /// `None` marks an explicitly missing value.
    pub samples: Vec<(DateTime<Utc>, Option<f64>)>,
    /// Sampling interval in seconds (300 for PWV, 1800 for precipitation, 3600 for reanalysis).
    pub native_step: i64,
    /// Rows that could not be parsed and were skipped.
    pub malformed_rows: usize,
}

impl RawSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `[first sample, last sample + native_step)`, the span `completeness` expects.
    pub fn span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        let first = self.samples.first()?.0;
        let last = self.samples.last()?.0;
        Some((first, last + chrono::Duration::seconds(self.native_step)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub station_id: String,
    pub fraction_present: f64,
    pub gap_count: usize,
    pub longest_gap_hours: f64,
}
