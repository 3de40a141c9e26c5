//! Domain types shared by every stage of the benchmark.

use std::ops::Range;

use chrono::{DateTime, Duration, FixedOffset, Timelike, Utc};
use ndarray::{Array2, ArrayView1};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of variables per hourly observation.
pub const N_VARS: usize = 6;

/// Column order of every station matrix.
pub const VARIABLES: [&str; N_VARS] = ["t2m", "sp", "rh", "wind_speed", "pwv", "tp"];

pub const UNITS: [&str; N_VARS] = ["K", "Pa", "%", "m/s", "mm", "mm/h"];

pub const T2M: usize = 0;
pub const SP: usize = 1;
pub const RH: usize = 2;
pub const WIND_SPEED: usize = 3;
pub const PWV: usize = 4;
/// Precipitation; always the last column and the sole prediction target.
pub const TP: usize = 5;

/// Variables filled by linear interpolation during QC.
pub const CONTINUOUS: [usize; 5] = [T2M, SP, RH, WIND_SPEED, PWV];

pub const HOUR_SECS: i64 = 3600;

pub fn variable_index(name: &str) -> Option<usize> {
    VARIABLES.iter().position(|v| *v == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continent {
    Africa,
    Antarctica,
    Asia,
    Europe,
    NorthAmerica,
    Oceania,
    SouthAmerica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub elevation: f64,
    pub continent: Continent,
}

impl StationMeta {
    pub fn new(
        station_id: impl Into<String>,
        latitude: f64,
        longitude: f64,
        elevation: f64,
        continent: Continent,
    ) -> Result<Self> {
        let meta = StationMeta {
            station_id: station_id.into(),
            latitude,
            longitude,
            elevation,
            continent,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.station_id.trim().is_empty() {
            return Err(Error::InvalidConfig("empty station_id".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::InvalidConfig(format!(
                "station {} coordinates ({}, {}) out of bounds",
                self.station_id, self.latitude, self.longitude
            )));
        }
        Ok(())
    }
}

/// Parse an ISO-8601 timestamp, accepting only a UTC designator (`Z` or `+00:00`).
pub fn parse_utc(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    let parsed: DateTime<FixedOffset> =
        DateTime::parse_from_rfc3339(s).map_err(|_| Error::InvalidTimestamp(s.to_string()))?;
    if parsed.offset().local_minus_utc() != 0 {
        return Err(Error::InvalidTimestamp(s.to_string()));
    }
    Ok(parsed.with_timezone(&Utc))
}

pub fn format_utc(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn is_hour_aligned(t: DateTime<Utc>) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// One variable on the hourly grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub variable: String,
    pub start_time: DateTime<Utc>,
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
}

impl HourlySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> DateTime<Utc> {
        self.start_time + Duration::hours(i as i64)
    }

    pub fn end_time(&self) -> DateTime<Utc> {
        self.time_at(self.len())
    }

    /// Value at the given hour, `None` if outside the series or masked.
    pub fn at(&self, t: DateTime<Utc>) -> Option<f64> {
        let offset = (t - self.start_time).num_seconds();
        if offset < 0 || offset % HOUR_SECS != 0 {
            return None;
        }
        let i = (offset / HOUR_SECS) as usize;
        if i < self.len() && !self.missing_mask[i] {
            Some(self.values[i])
        } else {
            None
        }
    }
}

/// Aligned hourly 6-variable matrix for one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub meta: StationMeta,
    pub start_time: DateTime<Utc>,
    /// T x 6 in [`VARIABLES`] order. Missing entries hold NaN.
    pub data: Array2<f64>,
    /// T x 6, true where the entry is missing.
    pub missing: Array2<bool>,
    pub qc_applied: bool,
}

impl StationSeries {
    /// A fully present, QC'd series, e.g. from the synthetic generator or an aligned CSV.
    pub fn complete(meta: StationMeta, start_time: DateTime<Utc>, data: Array2<f64>) -> Result<Self> {
        let missing = Array2::from_elem(data.dim(), false);
        let s = StationSeries {
            meta,
            start_time,
            data,
            missing,
            qc_applied: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn tp(&self) -> ArrayView1<'_, f64> {
        self.data.column(TP)
    }

    pub fn time_at(&self, i: usize) -> DateTime<Utc> {
        self.start_time + Duration::hours(i as i64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.ncols() != N_VARS || self.missing.dim() != self.data.dim() {
            return Err(Error::ShapeMismatch(format!(
                "station matrix must be T x {N_VARS}, got {:?}",
                self.data.dim()
            )));
        }
        if self.is_empty() {
            return Err(Error::Empty("station series"));
        }
        if !is_hour_aligned(self.start_time) {
            return Err(Error::InvalidTimestamp(format_utc(self.start_time)));
        }
        for ((v, m), col) in self
            .data
            .iter()
            .zip(self.missing.iter())
            .zip((0..self.data.len()).map(|k| k % N_VARS))
        {
            if self.qc_applied && *m {
                return Err(Error::InvalidConfig("QC'd series has missing entries".into()));
            }
            if !*m && !v.is_finite() {
                return Err(Error::InvalidConfig("non-finite present value".into()));
            }
            if !*m && col == TP && *v < 0.0 {
                return Err(Error::InvalidConfig("negative precipitation".into()));
            }
        }
        Ok(())
    }
}

/// Chronological train/validation/test ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitIndices {
    pub fn len(&self) -> usize {
        self.test.end
    }

    pub fn is_empty(&self) -> bool {
        self.test.end == 0
    }

    pub fn ranges(&self) -> [&Range<usize>; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// 7:1:2 chronological split with floor boundaries.
pub fn make_split(t: usize) -> Result<SplitIndices> {
    if t < 10 {
        return Err(Error::SeriesTooShort(t));
    }
    let a = t * 7 / 10;
    let b = t * 8 / 10;
    Ok(SplitIndices {
        train: 0..a,
        val: a..b,
        test: b..t,
    })
}

/// Root of every random stream in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Child seed for a labelled sub-stream. Pure function of (self, labels).
    pub fn derive(self, labels: &[u64]) -> Seed {
        let mut h = splitmix64(self.0 ^ 0x6a09_e667_f3bc_c908);
        for &l in labels {
            h = splitmix64(h ^ splitmix64(l));
        }
        Seed(h)
    }

    pub fn derive_str(self, label: &str) -> Seed {
        // FNV-1a, stable across platforms and builds
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.derive(&[h])
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
