use std::collections::BTreeSet;

use chrono::{DateTime, Duration, DurationRound, Utc};

use super::{CompletenessReport, RawSamples};
use crate::error::{Error, Result};
use crate::types::{HourlySeries, HOUR_SECS};

const HALF_HOUR: i64 = HOUR_SECS / 2;

/// Hour whose centered window `[H - 30 min, H + 30 min)` contains `t`.
fn owning_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    (t + Duration::seconds(HALF_HOUR))
        .duration_trunc(Duration::hours(1))
        .expect("hour truncation is infallible for valid timestamps")
}

/// Mean of the samples in each centered hourly window. Hours with no present
/// sample are masked.
pub fn resample_to_hourly(raw: &RawSamples) -> Result<HourlySeries> {
    let (first, last) = match (raw.samples.first(), raw.samples.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(Error::Empty("raw samples")),
    };
    let start = owning_hour(first);
    let n = ((owning_hour(last) - start).num_seconds() / HOUR_SECS) as usize + 1;
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for &(t, v) in &raw.samples {
        if let Some(v) = v {
            let i = ((owning_hour(t) - start).num_seconds() / HOUR_SECS) as usize;
            sums[i] += v;
            counts[i] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(HourlySeries {
        variable: raw.variable.clone(),
        start_time: start,
        values,
        missing_mask: counts.iter().map(|&c| c == 0).collect(),
    })
}

/// Fraction of native-step slots in `[span.0, span.1)` holding a present sample.
pub fn completeness(
    station_id: &str,
    raw: &RawSamples,
    span: (DateTime<Utc>, DateTime<Utc>),
) -> Result<CompletenessReport> {
    let (start, end) = span;
    let step = raw.native_step.max(1);
    let expected = ((end - start).num_seconds() / step).max(0) as usize;
    if expected == 0 {
        return Err(Error::Empty("completeness span"));
    }
    let present: BTreeSet<usize> = raw
        .samples
        .iter()
        .filter(|(t, v)| v.is_some() && *t >= start && *t < end)
        .filter_map(|(t, _)| {
            let off = (*t - start).num_seconds();
            (off % step == 0).then_some((off / step) as usize)
        })
        .collect();

    let mut gap_count = 0;
    let mut longest = 0usize;
    let mut run = 0usize;
    for slot in 0..expected {
        if present.contains(&slot) {
            run = 0;
        } else {
            if run == 0 {
                gap_count += 1;
            }
            run += 1;
            longest = longest.max(run);
        }
    }
    Ok(CompletenessReport {
        station_id: station_id.to_string(),
        fraction_present: present.len() as f64 / expected as f64,
        gap_count,
        longest_gap_hours: (longest as i64 * step) as f64 / HOUR_SECS as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 6, 1, 12, 0, 0).unwrap()
    }

    fn raw(samples: Vec<(DateTime<Utc>, Option<f64>)>, step: i64) -> RawSamples {
        RawSamples {
            variable: "pwv".into(),
            samples,
            native_step: step,
            malformed_rows: 0,
        }
    }

    #[test]
    fn constant_window_averages_to_constant() {
        let h = t0();
        let s = (0..12)
            .map(|k| (h - Duration::minutes(30) + Duration::minutes(5 * k), Some(20.0)))
            .collect();
        let out = resample_to_hourly(&raw(s, 300)).unwrap();
        assert_eq!(out.start_time, h);
        assert_eq!(out.values, vec![20.0]);
        assert_eq!(out.missing_mask, vec![false]);
    }

    #[test]
    fn window_mean_and_empty_hours() {
        let h = t0();
        let s = vec![
            (h - Duration::minutes(10), Some(19.0)),
            (h + Duration::minutes(10), Some(21.0)),
            // nothing near h+1
            (h + Duration::hours(2), Some(5.0)),
        ];
        let out = resample_to_hourly(&raw(s, 300)).unwrap();
        assert_eq!(out.values[0], 20.0);
        assert_eq!(out.missing_mask, vec![false, true, false]);
        assert_eq!(out.at(h + Duration::hours(2)), Some(5.0));
    }

    #[test]
    fn window_is_half_open() {
        let h = t0();
        let s = vec![
            (h + Duration::minutes(30), Some(1.0)),
            (h - Duration::minutes(30), Some(3.0)),
        ];
        let mut s = s;
        s.sort_by_key(|x| x.0);
        let out = resample_to_hourly(&raw(s, 1800)).unwrap();
        assert_eq!(out.start_time, h);
        assert_eq!(out.values, vec![3.0, 1.0]);
    }

    #[test]
    fn hourly_input_is_fixed_point() {
        let h = t0();
        let s: Vec<_> = (0..48)
            .map(|k| {
                (
                    h + Duration::hours(k),
                    if k % 7 == 3 { None } else { Some(k as f64 * 0.25) },
                )
            })
            .collect();
        let out = resample_to_hourly(&raw(s.clone(), 3600)).unwrap();
        for (i, (_, v)) in s.iter().enumerate() {
            match v {
                Some(v) => assert_eq!(out.values[i], *v),
                None => assert!(out.missing_mask[i]),
            }
        }
    }

    #[test]
    fn completeness_counts() {
        let h = t0();
        let full: Vec<_> = (0..1000).map(|k| (h + Duration::hours(k), Some(1.0))).collect();
        let span = (h, h + Duration::hours(1000));
        let r = completeness("S", &raw(full.clone(), 3600), span).unwrap();
        assert_eq!(r.fraction_present, 1.0);
        assert_eq!(r.gap_count, 0);

        let mut one_missing = full;
        one_missing.remove(500);
        let r = completeness("S", &raw(one_missing, 3600), span).unwrap();
        assert_eq!(r.fraction_present, 0.999);
        assert_eq!(r.gap_count, 1);
        assert_eq!(r.longest_gap_hours, 1.0);
    }

    #[test]
    fn completeness_in_reported_regime() {
        // 0.18% of 10000 hours removed in two gaps
        let h = t0();
        let s: Vec<_> = (0..10_000)
            .filter(|k| !(100..110).contains(k) && !(5000..5008).contains(k))
            .map(|k| (h + Duration::hours(k), Some(1.0)))
            .collect();
        let r = completeness("S", &raw(s, 3600), (h, h + Duration::hours(10_000))).unwrap();
        assert!((r.fraction_present - 0.9982).abs() < 1e-12);
        assert_eq!(r.gap_count, 2);
        assert_eq!(r.longest_gap_hours, 10.0);
    }
}
