use rand::Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Gradients, Tape, Var};
use crate::types::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// uniform in +-1/sqrt(fan_in)
    FanIn(usize),
    Const(f64),
}

/// Flat parameter vector with a named matrix layout, in declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub slots: Vec<ParamSlot>,
    inits: Vec<Init>,
}

impl ParamStore {
    pub fn declare(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> usize {
        let offset = self.values.len();
        self.slots.push(ParamSlot {
            name: name.into(),
            offset,
            rows,
            cols,
        });
        self.inits.push(init);
        self.values.resize(offset + rows * cols, 0.0);
        self.slots.len() - 1
    }

    /// Draw every `FanIn` slot from the seed in declaration order; constants are
    /// set without consuming randomness.
    pub fn initialize(&mut self, seed: Seed) {
        let mut rng = seed.rng();
        for (slot, init) in self.slots.iter().zip(&self.inits) {
            let values = &mut self.values[slot.offset..slot.offset + slot.len()];
            match *init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    for v in values {
                        *v = rng.random_range(-bound..bound);
                    }
                }
                Init::Const(c) => values.fill(c),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Put every slot on the tape as a leaf.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.slots
            .iter()
            .map(|s| tape.leaf(self.values[s.offset..s.offset + s.len()].to_vec(), s.rows, s.cols))
            .collect()
    }

    /// Gradients of the leaves, flattened in store order.
    pub fn gather(&self, leaves: &[Var], grads: &Gradients) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for (slot, &v) in self.slots.iter().zip(leaves) {
            grads.add_to(v, &mut out[slot.offset..slot.offset + slot.len()]);
        }
        out
    }

    /// Name of the slot owning flat index `i`.
    pub fn owner(&self, i: usize) -> &str {
        self.slots
            .iter()
            .find(|s| (s.offset..s.offset + s.len()).contains(&i))
            .map_or("?", |s| s.name.as_str())
    }
}
