//! Parameter-free baselines. They read raw precipitation directly.

use ndarray::ArrayView2;

use super::{Forecaster, ModelSpec, Shape, TargetScale, TrainConfig, TrainTrace, WindowedSample};
use crate::error::Result;
use crate::types::Seed;

macro_rules! untrained_fit {
    () => {
        fn fit(
            &mut self,
            _train: &[WindowedSample],
            _val: &[WindowedSample],
            _target: TargetScale,
            _tc: &TrainConfig,
            _seed: Seed,
        ) -> Result<TrainTrace> {
            Ok(TrainTrace::default())
        }

        fn name(&self) -> &str {
            &self.name
        }

        fn spec(&self) -> &ModelSpec {
            &self.spec
        }

        fn shape(&self) -> Shape {
            self.shape
        }
    };
}

/// Always forecasts dry hours.
#[derive(Debug, Clone)]
pub struct ZeroForecast {
    name: String,
    spec: ModelSpec,
    shape: Shape,
}

impl ZeroForecast {
    pub fn new(name: &str, shape: Shape) -> Self {
        ZeroForecast {
            name: name.into(),
            spec: ModelSpec::Zero,
            shape,
        }
    }
}

impl Forecaster for ZeroForecast {
    untrained_fit!();

    fn predict(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<Vec<f64>> {
        self.shape.check(x, x_raw_tp)?;
        Ok(vec![0.0; self.shape.l_out])
    }
}

/// Repeats the last observed precipitation.
#[derive(Debug, Clone)]
pub struct Persistence {
    name: String,
    spec: ModelSpec,
    shape: Shape,
}

impl Persistence {
    pub fn new(name: &str, shape: Shape) -> Self {
        Persistence {
            name: name.into(),
            spec: ModelSpec::Persistence,
            shape,
        }
    }
}

impl Forecaster for Persistence {
    untrained_fit!();

    fn predict(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<Vec<f64>> {
        self.shape.check(x, x_raw_tp)?;
        let last = x_raw_tp[x_raw_tp.len() - 1].max(0.0);
        Ok(vec![last; self.shape.l_out])
    }
}

/// Repeats the mean of the last `window` observed hours.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    name: String,
    spec: ModelSpec,
    shape: Shape,
    window: usize,
}

impl MovingAverage {
    pub fn new(name: &str, shape: Shape, window: usize) -> Self {
        MovingAverage {
            name: name.into(),
            spec: ModelSpec::MovingAverage { window },
            shape,
            window,
        }
    }
}

impl Forecaster for MovingAverage {
    untrained_fit!();

    fn predict(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<Vec<f64>> {
        self.shape.check(x, x_raw_tp)?;
        let w = self.window.min(x_raw_tp.len());
        let tail = &x_raw_tp[x_raw_tp.len() - w..];
        let mean = tail.iter().sum::<f64>() / w as f64;
        Ok(vec![mean.max(0.0); self.shape.l_out])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn shape() -> Shape {
        Shape { l_in: 6, l_out: 3 }
    }

    #[test]
    fn baseline_definitions() {
        let x = Array2::zeros((6, 6));
        let raw = [0.0, 0.0, 0.0, 6.0, 0.0, 1.2];
        assert_eq!(
            ZeroForecast::new("z", shape()).predict(x.view(), &raw).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(
            Persistence::new("p", shape()).predict(x.view(), &raw).unwrap(),
            vec![1.2; 3]
        );
        let raw = [0.0, 0.0, 0.0, 6.0, 0.0, 0.0];
        assert_eq!(
            MovingAverage::new("m", shape(), 6).predict(x.view(), &raw).unwrap(),
            vec![1.0; 3]
        );
    }

    #[test]
    fn shape_mismatch() {
        let x = Array2::zeros((5, 6));
        assert!(ZeroForecast::new("z", shape()).predict(x.view(), &[0.0; 5]).is_err());
    }
}
