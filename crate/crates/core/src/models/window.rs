use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use crate::error::{Error, Result};
use crate::types::{SplitIndices, StationSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Input hours.
    pub l_in: usize,
    /// Output steps.
    pub l_out: usize,
    /// Hours aggregated per output step.
    pub resolution: usize,
}

impl WindowConfig {
    pub fn new(l_in: usize, l_out: usize, resolution: usize) -> Result<Self> {
        if l_in < 2 || l_out < 1 || resolution < 1 {
            return Err(Error::InvalidConfig(format!(
                "window needs l_in >= 2, l_out >= 1, resolution >= 1; got ({l_in}, {l_out}, {resolution})"
            )));
        }
        Ok(WindowConfig {
            l_in,
            l_out,
            resolution,
        })
    }

    /// Hours spanned by one input window plus its targets.
    pub fn span(&self) -> usize {
        self.l_in + self.l_out * self.resolution
    }

    pub fn horizon_hours(&self) -> usize {
        self.l_out * self.resolution
    }
}

/// One (input window, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    /// L_in x 6, normalized.
    pub x: Array2<f64>,
    /// Raw precipitation over the input hours, mm/h.
    pub x_raw_tp: Vec<f64>,
    /// Target precipitation per output step, mm/h (mean over each step's hours).
    pub y: Vec<f64>,
    /// Series index of the first input hour.
    pub start: usize,
}

#[derive(Debug, Clone, Default)]
pub struct WindowedSplits {
    pub train: Vec<WindowedSample>,
    pub val: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
}

/// Slide a stride-1 window over the series.
///
/// A window belongs to the split containing its last target hour and is kept
/// only if all of its targets fall inside that split; inputs may reach back
/// into the preceding split.
pub fn window_dataset(
    series: &StationSeries,
    cfg: &WindowConfig,
    split: &SplitIndices,
    norm: &Normalizer,
) -> Result<WindowedSplits> {
    let t = series.len();
    if !series.qc_applied {
        return Err(Error::InvalidConfig("windowing requires a QC'd series".into()));
    }
    if t < cfg.span() {
        return Err(Error::InsufficientLength {
            have: t,
            need: cfg.span(),
        });
    }
    let normalized = norm.transform_rows(series.data.view());
    let tp = series.tp();
    let mut out = WindowedSplits::default();
    for start in 0..=t - cfg.span() {
        let first_target = start + cfg.l_in;
        let last_target = start + cfg.span() - 1;
        let (bucket, range) = if split.test.contains(&last_target) {
            (&mut out.test, &split.test)
        } else if split.val.contains(&last_target) {
            (&mut out.val, &split.val)
        } else {
            (&mut out.train, &split.train)
        };
        if first_target < range.start {
            continue;
        }
        let y = (0..cfg.l_out)
            .map(|j| {
                let a = first_target + j * cfg.resolution;
                tp.slice(s![a..a + cfg.resolution]).sum() / cfg.resolution as f64
            })
            .collect();
        bucket.push(WindowedSample {
            x: normalized.slice(s![start..first_target, ..]).to_owned(),
            x_raw_tp: tp.slice(s![start..first_target]).to_vec(),
            y,
            start,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{make_split, Continent, StationMeta, N_VARS, TP};
    use chrono::{TimeZone, Utc};

    fn series(tp: &[f64]) -> StationSeries {
        let mut d = Array2::zeros((tp.len(), N_VARS));
        for (i, v) in tp.iter().enumerate() {
            d[[i, TP]] = *v;
            d[[i, 0]] = i as f64;
        }
        let meta = StationMeta::new("X", 0.0, 0.0, 0.0, Continent::Asia).unwrap();
        StationSeries::complete(meta, Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), d).unwrap()
    }

    fn one_split(t: usize) -> SplitIndices {
        SplitIndices {
            train: 0..t,
            val: t..t,
            test: t..t,
        }
    }

    #[test]
    fn hourly_targets_are_raw() {
        let tp: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let s = series(&tp);
        let cfg = WindowConfig::new(4, 3, 1).unwrap();
        let n = Normalizer::fit(s.data.view(), 0..20);
        let w = window_dataset(&s, &cfg, &one_split(20), &n).unwrap();
        assert_eq!(w.train.len(), 20 - 7 + 1);
        assert_eq!(w.train[0].y, vec![2.0, 2.5, 3.0]);
        assert_eq!(w.train[0].x_raw_tp, vec![0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn two_hour_resolution_means() {
        let mut tp = vec![0.0; 4];
        tp.extend([2.0, 4.0, 0.0, 0.0, 6.0, 0.0]);
        let s = series(&tp);
        let cfg = WindowConfig::new(4, 3, 2).unwrap();
        let n = Normalizer::fit(s.data.view(), 0..10);
        let w = window_dataset(&s, &cfg, &one_split(10), &n).unwrap();
        assert_eq!(w.train.len(), 1);
        assert_eq!(w.train[0].y, vec![3.0, 0.0, 3.0]);
    }

    #[test]
    fn too_short() {
        let s = series(&[0.0; 6]);
        let cfg = WindowConfig::new(4, 3, 1).unwrap();
        let n = Normalizer::fit(s.data.view(), 0..6);
        assert!(matches!(
            window_dataset(&s, &cfg, &one_split(6), &n),
            Err(Error::InsufficientLength { have: 6, need: 7 })
        ));
    }

    #[test]
    fn no_target_leakage_across_splits() {
        let s = series(&[0.0; 200]);
        let split = make_split(200).unwrap();
        let cfg = WindowConfig::new(12, 2, 3).unwrap();
        let n = Normalizer::fit(s.data.view(), split.train.clone());
        let w = window_dataset(&s, &cfg, &split, &n).unwrap();
        for (samples, range) in [(&w.train, &split.train), (&w.val, &split.val), (&w.test, &split.test)] {
            assert!(!samples.is_empty());
            for smp in samples.iter() {
                let first = smp.start + cfg.l_in;
                let last = smp.start + cfg.span() - 1;
                assert!(range.contains(&first) && range.contains(&last));
            }
        }
        // train windows: 140 - 18 + 1; val: 20 - 6 + 1; test: 40 - 6 + 1
        assert_eq!((w.train.len(), w.val.len(), w.test.len()), (123, 15, 35));
    }
}
