//! Forecaster interface, baselines, a reverse-mode autodiff micro-core and a
//! small encoder transformer with pluggable attention-score biases.

pub mod attention;
pub mod autodiff;
mod baselines;
mod checkpoint;
mod gradcheck;
mod linear;
mod normalize;
mod params;
mod train;
mod transformer;
mod window;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use attention::{attention_forward, attention_scores, AttentionOutput, KeyBias, ScoreBias};
pub use baselines::{MovingAverage, Persistence, ZeroForecast};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, probe_batch, GradCheckReport};
pub use linear::LinearNet;
pub use normalize::{Normalizer, TargetScale};
pub use params::{Init, ParamSlot, ParamStore};
pub use train::{batch_loss, fit_params, EpochRecord, NeuralForecaster, TrainConfig, TrainTrace};
pub use transformer::{TransformerConfig, TransformerNet};
pub use window::{window_dataset, WindowConfig, WindowedSample, WindowedSplits};

use crate::error::{Error, Result};
use crate::types::{Seed, N_VARS};
use autodiff::{Tape, Var};

/// Which forecaster to build, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Zero,
    Persistence,
    MovingAverage {
        #[serde(default = "default_ma_window")]
        window: usize,
    },
    Linear,
    Transformer(TransformerConfig),
}

fn default_ma_window() -> usize {
    6
}

impl ModelSpec {
    pub fn default_name(&self) -> String {
        match self {
            ModelSpec::Zero => "zero".into(),
            ModelSpec::Persistence => "persistence".into(),
            ModelSpec::MovingAverage { .. } => "moving_average".into(),
            ModelSpec::Linear => "linear".into(),
            ModelSpec::Transformer(c) if c.bfpf.enabled => "transformer_bfpf".into(),
            ModelSpec::Transformer(_) => "transformer".into(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, ModelSpec::Linear | ModelSpec::Transformer(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::MovingAverage { window: 0 } => {
                Err(Error::InvalidConfig("moving_average window must be >= 1".into()))
            }
            ModelSpec::Transformer(c) => c.validate(),
            _ => Ok(()),
        }
    }

    /// The four simple baselines followed by the transformer without and with the biases.
    pub fn standard_suite(transformer: TransformerConfig) -> Vec<ModelSpec> {
        let mut plain = transformer.clone();
        plain.bfpf.enabled = false;
        let mut biased = transformer;
        biased.bfpf.enabled = true;
        vec![
            ModelSpec::Zero,
            ModelSpec::Persistence,
            ModelSpec::MovingAverage { window: 6 },
            ModelSpec::Linear,
            ModelSpec::Transformer(plain),
            ModelSpec::Transformer(biased),
        ]
    }

    /// Build an untrained forecaster for windows of `l_in` hours and `l_out` steps.
    pub fn build(&self, name: &str, l_in: usize, l_out: usize, seed: Seed) -> Result<Box<dyn Forecaster>> {
        self.validate()?;
        let shape = Shape { l_in, l_out };
        Ok(match self {
            ModelSpec::Zero => Box::new(ZeroForecast::new(name, shape)),
            ModelSpec::Persistence => Box::new(Persistence::new(name, shape)),
            ModelSpec::MovingAverage { window } => Box::new(MovingAverage::new(name, shape, *window)),
            ModelSpec::Linear => Box::new(NeuralForecaster::new(
                name,
                self.clone(),
                shape,
                LinearNet::new(l_in, l_out, seed),
            )),
            ModelSpec::Transformer(cfg) => Box::new(NeuralForecaster::new(
                name,
                self.clone(),
                shape,
                TransformerNet::new(cfg.clone(), l_in, l_out, seed)?,
            )),
        })
    }
}

/// Input length and output steps a forecaster was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub l_in: usize,
    pub l_out: usize,
}

impl Shape {
    pub fn check(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<()> {
        if x.dim() != (self.l_in, N_VARS) || x_raw_tp.len() != self.l_in {
            return Err(Error::ShapeMismatch(format!(
                "expected input {}x{N_VARS} and {} raw values, got {:?} and {}",
                self.l_in,
                self.l_in,
                x.dim(),
                x_raw_tp.len()
            )));
        }
        Ok(())
    }
}

/// A multivariate-to-univariate precipitation forecaster.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> &ModelSpec;

    fn shape(&self) -> Shape;

    /// Train on `train`, select on `val`. Targets are fed to the model in the
    /// normalized space given by `target`. Non-trainable models ignore this.
    fn fit(
        &mut self,
        train: &[WindowedSample],
        val: &[WindowedSample],
        target: TargetScale,
        tc: &TrainConfig,
        seed: Seed,
    ) -> Result<TrainTrace>;

    /// Forecast `l_out` steps in mm/h, clamped at zero. `x` is the normalized
    /// L_in x 6 window, `x_raw_tp` the raw precipitation over the same hours.
    fn predict(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<Vec<f64>>;

    /// Target scale and flat parameters, empty for parameter-free models.
    fn state(&self) -> (TargetScale, Vec<f64>) {
        (TargetScale::default(), Vec::new())
    }

    fn load_state(&mut self, _target: TargetScale, params: &[f64]) -> Result<()> {
        if params.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("{} has no parameters", self.name())))
        }
    }
}

/// A model whose forward pass is recorded on an autodiff [`Tape`].
pub trait Differentiable: Send + Sync {
    fn store(&self) -> &ParamStore;

    fn store_mut(&mut self) -> &mut ParamStore;

    /// 1 x L_out prediction in normalized target units. Shapes are checked by the caller.
    fn forward(&self, tape: &mut Tape, leaves: &[Var], x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Var;

    /// Redraw every parameter from `seed`.
    fn reinitialize(&mut self, seed: Seed) {
        self.store_mut().initialize(seed);
    }
}
