use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use ndarray::{s, Array2};

use super::grid::{bilinear_sample, nearest_sample, GridField};
use super::resample::resample_to_hourly;
use super::RawSamples;
use crate::error::{Error, Result};
use crate::types::{
    StationMeta, StationSeries, CONTINUOUS, HOUR_SECS, N_VARS, PWV, RH, SP, T2M, TP, VARIABLES, WIND_SPEED,
};

type FieldsByHour<'a> = BTreeMap<DateTime<Utc>, &'a GridField>;

fn index_fields<'a>(fields: impl Iterator<Item = &'a GridField>) -> FieldsByHour<'a> {
    fields.map(|f| (f.timestamp, f)).collect()
}

/// Build the hourly station matrix from PWV samples, reanalysis grids and precipitation grids.
///
/// Reanalysis variables are sampled bilinearly, precipitation by nearest cell. The
/// output covers the hours common to every source; hours a source lacks inside
/// that span are marked missing for QC.
pub fn align_station(
    pwv: &RawSamples,
    met_fields: &[GridField],
    precip_fields: &[GridField],
    meta: StationMeta,
) -> Result<StationSeries> {
    let pwv_hourly = resample_to_hourly(pwv)?;
    let met: Vec<(usize, FieldsByHour)> = [T2M, SP, RH, WIND_SPEED]
        .into_iter()
        .map(|col| {
            (
                col,
                index_fields(met_fields.iter().filter(|f| f.variable == VARIABLES[col])),
            )
        })
        .collect();
    let precip = index_fields(precip_fields.iter());

    let mut start = pwv_hourly.start_time;
    let mut end = pwv_hourly.end_time() - Duration::hours(1);
    for idx in met.iter().map(|(_, m)| m).chain(std::iter::once(&precip)) {
        let (Some((&first, _)), Some((&last, _))) = (idx.first_key_value(), idx.last_key_value()) else {
            return Err(Error::NoOverlap);
        };
        start = start.max(first);
        end = end.min(last);
    }
    if end < start {
        return Err(Error::NoOverlap);
    }
    let t = ((end - start).num_seconds() / HOUR_SECS) as usize + 1;

    let mut data = Array2::from_elem((t, N_VARS), f64::NAN);
    let mut missing = Array2::from_elem((t, N_VARS), true);
    let (lat, lon) = (meta.latitude, meta.longitude);
    let mut put = |i: usize, col: usize, v: Result<f64>| -> Result<()> {
        match v {
            Ok(v) => {
                data[[i, col]] = v;
                missing[[i, col]] = false;
                Ok(())
            }
            Err(e @ Error::OutOfGrid { .. }) => Err(e),
            Err(_) => Ok(()),
        }
    };
    for i in 0..t {
        let hour = start + Duration::hours(i as i64);
        for (col, fields) in &met {
            if let Some(f) = fields.get(&hour) {
                put(i, *col, bilinear_sample(f, lat, lon))?;
            }
        }
        if let Some(f) = precip.get(&hour) {
            match nearest_sample(f, lat, lon) {
                Ok(v) if v < 0.0 => log::warn!("negative precipitation {v} at {hour}; marked missing"),
                r => put(i, TP, r)?,
            }
        }
        if let Some(v) = pwv_hourly.at(hour) {
            put(i, PWV, Ok(v))?;
        }
    }
    Ok(StationSeries {
        meta,
        start_time: start,
        data,
        missing,
        qc_applied: false,
    })
}

/// Fill gaps: linear interpolation for continuous variables, forward fill for
/// precipitation (a leading precipitation gap becomes 0). Rows before the first
/// or after the last hour where every continuous variable is present are trimmed.
pub fn qc_fill(series: &StationSeries) -> Result<StationSeries> {
    let mut lo = 0;
    let mut hi = series.len();
    for &col in &CONTINUOUS {
        let present: Vec<usize> = (0..series.len()).filter(|&i| !series.missing[[i, col]]).collect();
        if present.len() < 2 {
            return Err(Error::UnfillableVariable(VARIABLES[col]));
        }
        lo = lo.max(present[0]);
        hi = hi.min(present[present.len() - 1] + 1);
    }
    if hi <= lo + 1 {
        // the per-variable present ranges do not overlap in two or more hours
        let col = CONTINUOUS
            .into_iter()
            .find(|&c| (lo..hi).filter(|&i| !series.missing[[i, c]]).count() < 2)
            .unwrap_or(PWV);
        return Err(Error::UnfillableVariable(VARIABLES[col]));
    }

    let mut data = series.data.slice(s![lo..hi, ..]).to_owned();
    let missing = series.missing.slice(s![lo..hi, ..]);
    for &col in &CONTINUOUS {
        let mut prev: Option<usize> = None;
        for i in 0..data.nrows() {
            if missing[[i, col]] {
                continue;
            }
            if let Some(p) = prev {
                if i > p + 1 {
                    let (a, b) = (data[[p, col]], data[[i, col]]);
                    let span = (i - p) as f64;
                    for k in p + 1..i {
                        let w = (k - p) as f64 / span;
                        data[[k, col]] = a + (b - a) * w;
                    }
                }
            }
            prev = Some(i);
        }
    }
    let mut last = 0.0;
    for i in 0..data.nrows() {
        if missing[[i, TP]] {
            data[[i, TP]] = last;
        } else {
            last = data[[i, TP]];
        }
    }

    let filled = StationSeries {
        meta: series.meta.clone(),
        start_time: series.start_time + Duration::hours(lo as i64),
        missing: Array2::from_elem(data.dim(), false),
        data,
        qc_applied: true,
    };
    filled.validate()?;
    Ok(filled)
}
