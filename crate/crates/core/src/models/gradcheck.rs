use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::train::batch_loss;
use super::{Differentiable, TargetScale, WindowedSample};
use crate::types::{Seed, N_VARS};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    /// Largest relative error per parameter slot, in declaration order.
    pub per_slot: Vec<(String, f64)>,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn slot_error(&self, name: &str) -> Option<f64> {
        self.per_slot.iter().find(|(n, _)| n == name).map(|(_, e)| *e)
    }
}

/// Random normalized windows whose raw rainfall mixes dry and wet hours, so both
/// attention biases are exercised.
pub fn probe_batch(n: usize, l_in: usize, l_out: usize, seed: Seed) -> Vec<WindowedSample> {
    let mut rng = seed.rng();
    (0..n)
        .map(|start| {
            let x = Array2::from_shape_fn((l_in, N_VARS), |_| StandardNormal.sample(&mut rng));
            let mut x_raw_tp: Vec<f64> = (0..l_in)
                .map(|_| {
                    if rng.random_bool(0.6) {
                        0.0
                    } else {
                        rng.random_range(0.1..8.0)
                    }
                })
                .collect();
            if l_in > 1 {
                x_raw_tp[0] = 0.0;
                x_raw_tp[l_in - 1] = x_raw_tp[l_in - 1].max(0.5);
            }
            let y = (0..l_out).map(|_| rng.random_range(0.0..6.0)).collect();
            WindowedSample { x, x_raw_tp, y, start }
        })
        .collect()
}

/// Compare reverse-mode gradients of the batch loss with central differences
/// for every parameter. Relative error uses `max(|g_ad|, 1e-8)` as denominator.
pub fn grad_check<M: Differentiable + ?Sized>(
    model: &mut M,
    batch: &[WindowedSample],
    target: TargetScale,
    step: f64,
) -> GradCheckReport {
    let refs: Vec<&WindowedSample> = batch.iter().collect();
    let (loss, grad) = batch_loss(model, &refs, target, true);
    let grad = grad.expect("requested");
    let n = model.store().len();
    let mut errors = vec![0.0; n];
    for i in 0..n {
        let orig = model.store().values[i];
        model.store_mut().values[i] = orig + step;
        let up = batch_loss(model, &refs, target, false).0;
        model.store_mut().values[i] = orig - step;
        let down = batch_loss(model, &refs, target, false).0;
        model.store_mut().values[i] = orig;
        let fd = (up - down) / (2.0 * step);
        errors[i] = (grad[i] - fd).abs() / grad[i].abs().max(1e-8);
    }
    let store = model.store();
    let per_slot = store
        .slots
        .iter()
        .map(|s| {
            let e = errors[s.offset..s.offset + s.len()].iter().copied().fold(0.0, f64::max);
            (s.name.clone(), e)
        })
        .collect();
    let (worst, max_rel_error) =
        errors
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    GradCheckReport {
        n_params: n,
        max_rel_error,
        worst_param: store.owner(worst).to_string(),
        per_slot,
        loss,
    }
}
