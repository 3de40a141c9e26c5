//! Pre-norm encoder transformer over hourly tokens with a flatten-then-linear head.
//!
//! Each input hour is one token. When the bi-focus biases are enabled, their
//! learnable scales are the last two parameters and every attention head of
//! every layer adds them to its scores.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::attention::ScoreBias;
use super::autodiff::{Tape, Var};
use super::params::{Init, ParamStore};
use super::Differentiable;
use crate::bfpf::{BfpfConfig, NonZeroFocus, TemporalFocus};
use crate::error::{Error, Result};
use crate::types::{Seed, N_VARS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_dim: usize,
    /// Only 0 is supported; kept so configs state it explicitly.
    pub dropout: f64,
    pub bfpf: BfpfConfig,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 32,
            n_heads: 4,
            n_layers: 2,
            ff_dim: 64,
            dropout: 0.0,
            bfpf: BfpfConfig::default(),
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.ff_dim == 0 {
            return Err(Error::InvalidConfig("n_layers and ff_dim must be positive".into()));
        }
        if self.dropout != 0.0 {
            return Err(Error::InvalidConfig("dropout is not supported; set it to 0".into()));
        }
        self.bfpf.validate()
    }

    fn uses_nonzero_focus(&self) -> bool {
        self.bfpf.enabled && self.bfpf.nonzero_focus
    }

    fn uses_temporal_focus(&self) -> bool {
        self.bfpf.enabled && self.bfpf.temporal_focus
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlots {
    ln1: (usize, usize),
    q: (usize, usize),
    /// Key projection has no bias: a shift shared by all keys cancels in the softmax.
    k: usize,
    v: (usize, usize),
    o: (usize, usize),
    ln2: (usize, usize),
    ff1: (usize, usize),
    ff2: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct TransformerNet {
    cfg: TransformerConfig,
    l_in: usize,
    l_out: usize,
    store: ParamStore,
    embed: (usize, usize),
    layers: Vec<LayerSlots>,
    final_ln: (usize, usize),
    head: (usize, usize),
    lambda: Option<usize>,
    alpha: Option<usize>,
    positional: Vec<f64>,
}

fn sinusoidal(l: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; l * d];
    for t in 0..l {
        for i in 0..d {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = t as f64 * freq;
            pe[t * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

impl TransformerNet {
    pub fn new(cfg: TransformerConfig, l_in: usize, l_out: usize, seed: Seed) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let mut st = ParamStore::default();
        let affine = |st: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize| {
            (
                st.declare(format!("{name}.weight"), fan_in, fan_out, Init::FanIn(fan_in)),
                st.declare(format!("{name}.bias"), 1, fan_out, Init::FanIn(fan_in)),
            )
        };
        let norm = |st: &mut ParamStore, name: &str| {
            (
                st.declare(format!("{name}.gain"), 1, d, Init::Const(1.0)),
                st.declare(format!("{name}.bias"), 1, d, Init::Const(0.0)),
            )
        };
        let embed = affine(&mut st, "embed", N_VARS, d);
        let layers = (0..cfg.n_layers)
            .map(|l| LayerSlots {
                ln1: norm(&mut st, &format!("layer{l}.ln1")),
                q: affine(&mut st, &format!("layer{l}.attn.q"), d, d),
                k: st.declare(format!("layer{l}.attn.k.weight"), d, d, Init::FanIn(d)),
                v: affine(&mut st, &format!("layer{l}.attn.v"), d, d),
                o: affine(&mut st, &format!("layer{l}.attn.out"), d, d),
                ln2: norm(&mut st, &format!("layer{l}.ln2")),
                ff1: affine(&mut st, &format!("layer{l}.ff1"), d, cfg.ff_dim),
                ff2: affine(&mut st, &format!("layer{l}.ff2"), cfg.ff_dim, d),
            })
            .collect();
        let final_ln = norm(&mut st, "final_ln");
        let head = affine(&mut st, "head", l_in * d, l_out);
        // bias scales go last so the other parameters draw identical values with or without them
        let lambda = cfg
            .uses_nonzero_focus()
            .then(|| st.declare("bfpf.lambda", 1, 1, Init::Const(cfg.bfpf.lambda_init)));
        let alpha = cfg
            .uses_temporal_focus()
            .then(|| st.declare("bfpf.alpha", 1, 1, Init::Const(cfg.bfpf.alpha_init)));
        st.initialize(seed);
        Ok(TransformerNet {
            positional: sinusoidal(l_in, d),
            cfg,
            l_in,
            l_out,
            store: st,
            embed,
            layers,
            final_ln,
            head,
            lambda,
            alpha,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    pub fn l_out(&self) -> usize {
        self.l_out
    }

    /// Current values of the learned bias scales `(lambda, alpha)`.
    pub fn bias_scales(&self) -> (Option<f64>, Option<f64>) {
        let get = |slot: Option<usize>| slot.map(|s| self.store.values[self.store.slots[s].offset]);
        (get(self.lambda), get(self.alpha))
    }

    fn attention(&self, tape: &mut Tape, p: &[Var], a: Var, slots: &LayerSlots, biases: &[(Var, Vec<f64>)]) -> Var {
        let d = self.cfg.d_model;
        let dh = d / self.cfg.n_heads;
        let q = tape.affine(a, p[slots.q.0], p[slots.q.1]);
        let k = tape.matmul(a, p[slots.k]);
        let v = tape.affine(a, p[slots.v.0], p[slots.v.1]);
        let heads: Vec<Var> = (0..self.cfg.n_heads)
            .map(|h| {
                let cols = h * dh..(h + 1) * dh;
                let qh = tape.slice_cols(q, cols.clone());
                let kh = tape.slice_cols(k, cols.clone());
                let vh = tape.slice_cols(v, cols);
                let s = tape.matmul_t(qh, kh);
                let mut s = tape.scale(s, 1.0 / (dh as f64).sqrt());
                for (scale, profile) in biases {
                    s = tape.key_bias(s, *scale, profile.clone());
                }
                let w = tape.softmax_rows(s);
                tape.matmul(w, vh)
            })
            .collect();
        let ctx = tape.concat_cols(&heads);
        tape.affine(ctx, p[slots.o.0], p[slots.o.1])
    }
}

impl Differentiable for TransformerNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, p: &[Var], x: ArrayView2<'_, f64>, x_raw_tp: &[f64]) -> Var {
        let (l, d) = (self.l_in, self.cfg.d_model);
        let params = self.cfg.bfpf.params();

        let mut biases = Vec::new();
        if let Some(slot) = self.lambda {
            let raw = Array2::from_shape_vec((1, l), x_raw_tp.to_vec()).expect("raw length checked");
            let focus = NonZeroFocus::from_rainfall(raw.view(), &params);
            let profile = focus.key_profile(0, l).expect("weights built for this length");
            biases.push((p[slot], profile));
        }
        if let Some(slot) = self.alpha {
            let profile = TemporalFocus { alpha: 0.0 }.key_profile(0, l).expect("any length");
            biases.push((p[slot], profile));
        }

        let input = tape.leaf(x.iter().copied().collect(), l, N_VARS);
        let pe = tape.leaf(self.positional.clone(), l, d);
        let h = tape.affine(input, p[self.embed.0], p[self.embed.1]);
        let mut h = tape.add(h, pe);
        for slots in &self.layers {
            let a = tape.layer_norm(h, p[slots.ln1.0], p[slots.ln1.1]);
            let att = self.attention(tape, p, a, slots, &biases);
            h = tape.add(h, att);
            let a = tape.layer_norm(h, p[slots.ln2.0], p[slots.ln2.1]);
            let f = tape.affine(a, p[slots.ff1.0], p[slots.ff1.1]);
            let f = tape.gelu(f);
            let f = tape.affine(f, p[slots.ff2.0], p[slots.ff2.1]);
            h = tape.add(h, f);
        }
        let h = tape.layer_norm(h, p[self.final_ln.0], p[self.final_ln.1]);
        let flat = tape.reshape(h, 1, l * d);
        tape.affine(flat, p[self.head.0], p[self.head.1])
    }
}
