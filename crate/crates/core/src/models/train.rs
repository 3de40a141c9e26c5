//! Deterministic mini-batch Adam training with validation-based early stopping.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::autodiff::Tape;
use super::{Differentiable, Forecaster, ModelSpec, Shape, TargetScale, WindowedSample};
use crate::error::{Error, Result};
use crate::types::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Cap on mini-batches per epoch; batches are drawn from a fresh shuffle each epoch.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            max_batches_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.max_batches_per_epoch != Some(0);
        let betas = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if positive && betas {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

/// Mean per-sample MSE on normalized targets, and its gradient in store order.
pub fn batch_loss<M: Differentiable + ?Sized>(
    model: &M,
    batch: &[&WindowedSample],
    target: TargetScale,
    with_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let mut tape = Tape::new();
    let leaves = model.store().leaves(&mut tape);
    let losses: Vec<_> = batch
        .iter()
        .map(|s| {
            let pred = model.forward(&mut tape, &leaves, s.x.view(), &s.x_raw_tp);
            tape.mse(pred, &target.normalize(&s.y))
        })
        .collect();
    let loss = tape.sum_scaled(&losses, 1.0 / batch.len() as f64);
    let value = tape.scalar(loss);
    let grad = with_grad.then(|| model.store().gather(&leaves, &tape.backward(loss)));
    (value, grad)
}

fn mean_loss<M: Differentiable + ?Sized>(model: &M, samples: &[WindowedSample], target: TargetScale) -> f64 {
    const CHUNK: usize = 64;
    let mut total = 0.0;
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&WindowedSample> = chunk.iter().collect();
        total += batch_loss(model, &refs, target, false).0 * chunk.len() as f64;
    }
    total / samples.len() as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], tc: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - tc.beta1.powi(self.t);
        let c2 = 1.0 - tc.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = tc.beta1 * self.m[i] + (1.0 - tc.beta1) * grad[i];
            self.v[i] = tc.beta2 * self.v[i] + (1.0 - tc.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= tc.learning_rate * m_hat / (v_hat.sqrt() + tc.epsilon);
        }
    }
}

/// Initialize from `seed`, train with Adam, and keep the best-validation parameters.
pub fn fit_params<M: Differentiable + ?Sized>(
    model: &mut M,
    train: &[WindowedSample],
    val: &[WindowedSample],
    target: TargetScale,
    tc: &TrainConfig,
    seed: Seed,
) -> Result<TrainTrace> {
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training or validation windows"));
    }
    model.reinitialize(seed.derive_str("init"));
    let mut rng = seed.derive_str("batches").rng();
    let mut adam = Adam::new(model.store().len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = TrainTrace::default();
    let mut best = model.store().values.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..tc.max_epochs {
        order.shuffle(&mut rng);
        let n_batches = order
            .len()
            .div_ceil(tc.batch_size)
            .min(tc.max_batches_per_epoch.unwrap_or(usize::MAX));
        let mut train_loss = 0.0;
        for idx in order.chunks(tc.batch_size).take(n_batches) {
            let batch: Vec<&WindowedSample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = batch_loss(model, &batch, target, true);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            train_loss += loss / n_batches as f64;
            adam.step(&mut model.store_mut().values, &grad.expect("requested"), tc);
        }
        let val_loss = mean_loss(model, val, target);
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best.clone_from(&model.store().values);
            trace.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= tc.patience {
                break;
            }
        }
    }
    model.store_mut().values = best;
    trace.best_val_loss = Some(best_val);
    Ok(trace)
}

/// Adapts a [`Differentiable`] network to the [`Forecaster`] interface.
#[derive(Debug, Clone)]
pub struct NeuralForecaster<M> {
    name: String,
    spec: ModelSpec,
    shape: Shape,
    target: TargetScale,
    pub net: M,
}

impl<M: Differentiable> NeuralForecaster<M> {
    pub fn new(name: &str, spec: ModelSpec, shape: Shape, net: M) -> Self {
        NeuralForecaster {
            name: name.into(),
            spec,
            shape,
            target: TargetScale::default(),
            net,
        }
    }

    pub fn target(&self) -> TargetScale {
        self.target
    }

    /// Prediction in normalized target units, before clamping.
    pub fn predict_normalized(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<Vec<f64>> {
        self.shape.check(x, x_raw_tp)?;
        let mut tape = Tape::new();
        let leaves = self.net.store().leaves(&mut tape);
        let out = self.net.forward(&mut tape, &leaves, x, x_raw_tp);
        Ok(tape.value(out).to_vec())
    }
}

impl<M: Differentiable> Forecaster for NeuralForecaster<M> {
    fn name(&self) -> &str {
        &self.name
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn shape(&self) -> Shape {
        self.shape
    }

    fn fit(
        &mut self,
        train: &[WindowedSample],
        val: &[WindowedSample],
        target: TargetScale,
        tc: &TrainConfig,
        seed: Seed,
    ) -> Result<TrainTrace> {
        for s in train.iter().chain(val) {
            self.shape.check(s.x.view(), &s.x_raw_tp)?;
            if s.y.len() != self.shape.l_out {
                return Err(Error::ShapeMismatch(format!(
                    "target length {} != {}",
                    s.y.len(),
                    self.shape.l_out
                )));
            }
        }
        self.target = target;
        fit_params(&mut self.net, train, val, target, tc, seed)
    }

    fn predict(&self, x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Result<Vec<f64>> {
        Ok(self.target.denormalize(&self.predict_normalized(x, x_raw_tp)?))
    }

    fn state(&self) -> (TargetScale, Vec<f64>) {
        (self.target, self.net.store().values.clone())
    }

    fn load_state(&mut self, target: TargetScale, params: &[f64]) -> Result<()> {
        if params.len() != self.net.store().len() {
            return Err(Error::Checkpoint(format!(
                "{} expects {} parameters, checkpoint has {}",
                self.name,
                self.net.store().len(),
                params.len()
            )));
        }
        self.target = target;
        self.net.store_mut().values.copy_from_slice(params);
        Ok(())
    }
}
