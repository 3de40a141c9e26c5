use ndarray::ArrayView2;

use super::autodiff::{Tape, Var};
use super::params::{Init, ParamStore};
use super::Differentiable;
use crate::types::{Seed, N_VARS};

/// Flattened input window mapped linearly onto the output steps.
#[derive(Debug, Clone)]
pub struct LinearNet {
    store: ParamStore,
    l_in: usize,
}

impl LinearNet {
    pub fn new(l_in: usize, l_out: usize, seed: Seed) -> Self {
        let fan_in = l_in * N_VARS;
        let mut store = ParamStore::default();
        store.declare("linear.weight", fan_in, l_out, Init::FanIn(fan_in));
        store.declare("linear.bias", 1, l_out, Init::FanIn(fan_in));
        store.initialize(seed);
        LinearNet { store, l_in }
    }
}

impl Differentiable for LinearNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, leaves: &[Var], x: ArrayView2<'_, f64>, _x_raw_tp: &[f64]) -> Var {
        let flat = tape.leaf(x.iter().copied().collect(), 1, self.l_in * N_VARS);
        tape.affine(flat, leaves[0], leaves[1])
    }
}
