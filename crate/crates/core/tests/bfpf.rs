mod common;

use common::{mixed_rain, random_samples, softmax, zero_distance_oracle, zero_inflated};
use ndarray::{Array2, Array4};
use nowcast_core::bfpf::{
    nonzero_focus_hook, proximity_weights, temporal_focus_hook, zero_distance, BfpfConfig, NonZeroFocus, TemporalFocus,
    DEFAULT_SENTINEL,
};
use nowcast_core::models::{attention_forward, ModelSpec, ScoreBias, TransformerConfig};
use nowcast_core::Seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn two_pass_distance_matches_definition() {
    let mut rng = Seed(7).rng();
    for _ in 0..1000 {
        let l = rng.random_range(1..=64);
        let x = zero_inflated(&mut rng, l, 0.8);
        let got = zero_distance(
            Array2::from_shape_vec((1, l), x.clone()).unwrap().view(),
            DEFAULT_SENTINEL,
        );
        assert_eq!(got.row(0).to_vec(), zero_distance_oracle(&x, DEFAULT_SENTINEL), "{x:?}");
    }
}

#[test]
fn documented_distance_examples() {
    let s = DEFAULT_SENTINEL;
    let d = zero_distance(
        Array2::from_shape_vec((3, 5), vec![0., 2., 3., 0., 5., 0., 0., 0., 0., 0., 5., 7., 1., 1., 1.])
            .unwrap()
            .view(),
        s,
    );
    assert_eq!(d.row(0).to_vec(), vec![s, 1., 1., s, 1.]);
    assert!(d.row(1).iter().all(|&v| v == s));
    assert!(d.row(2).iter().all(|&v| v == s));
    let w = proximity_weights(d.view(), 2.0);
    assert!(w.row(1).iter().all(|&v| v < 1e-300 && v.is_finite()));
    assert!((proximity_weights(Array2::from_elem((1, 1), 2.0).view(), 2.0)[[0, 0]] - (-1f64).exp()).abs() < 1e-15);
}

fn random_scores(rng: &mut impl Rng, l_q: usize, l_k: usize) -> Array4<f64> {
    Array4::from_shape_fn((1, 1, l_q, l_k), |_| {
        2.0 * Distribution::<f64>::sample(&StandardNormal, rng)
    })
}

#[test]
fn nonzero_focus_moves_mass_to_wet_keys() {
    let mut rng = Seed(8).rng();
    let params = BfpfConfig::default().params();
    let mut violations = 0;
    for case in 0..1000 {
        let l = rng.random_range(2..=32);
        let rain = if case % 10 == 0 {
            zero_inflated(&mut rng, l, 0.8)
        } else {
            mixed_rain(&mut rng, l, 0.8)
        };
        let both = rain.contains(&0.0) && rain.iter().any(|&v| v > 0.0);
        let w =
            NonZeroFocus::from_rainfall(Array2::from_shape_vec((1, l), rain.clone()).unwrap().view(), &params).weights;
        let scores = random_scores(&mut rng, 3, l);
        for lambda in [0.1, 1.0, 10.0] {
            let mut biased = scores.clone();
            nonzero_focus_hook(&mut biased, w.view(), lambda).unwrap();
            for i in 0..3 {
                let plain = softmax(&scores.slice(ndarray::s![0, 0, i, ..]).to_vec());
                let with = softmax(&biased.slice(ndarray::s![0, 0, i, ..]).to_vec());
                let mass = |p: &[f64]| (0..l).filter(|&j| w[[0, j]] > 0.0).map(|j| p[j]).sum::<f64>();
                let (m0, m1) = (mass(&plain), mass(&with));
                if m1 < m0 || (both && m1 <= m0) {
                    violations += 1;
                }
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn documented_softmax_example() {
    let mut s = Array4::zeros((1, 1, 1, 2));
    nonzero_focus_hook(
        &mut s,
        Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap().view(),
        3f64.ln(),
    )
    .unwrap();
    let p = softmax(&s.iter().copied().collect::<Vec<_>>());
    assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
}

#[test]
fn temporal_focus_prefers_recent_keys() {
    let mut uniform = Array4::zeros((1, 1, 1, 6));
    temporal_focus_hook(&mut uniform, 0.5).unwrap();
    let p = softmax(&uniform.iter().copied().collect::<Vec<_>>());
    assert!(p.windows(2).all(|w| w[1] > w[0]));

    let argmax = |row: &[f64]| {
        // ties go to the larger index
        (0..row.len()).fold(0, |best, j| if row[j] >= row[best] { j } else { best })
    };
    let mut rng = Seed(9).rng();
    for _ in 0..500 {
        let l = rng.random_range(1..=24);
        let base = random_scores(&mut rng, 1, l);
        let mut prev = 0;
        for alpha in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let mut s = base.clone();
            temporal_focus_hook(&mut s, alpha).unwrap();
            let a = argmax(&s.iter().copied().collect::<Vec<_>>());
            assert!(a >= prev);
            prev = a;
        }
    }
}

#[test]
fn hooks_commute_and_mismatch_is_an_error() {
    let mut rng = Seed(10).rng();
    let rain = mixed_rain(&mut rng, 9, 0.6);
    let focus = NonZeroFocus::from_rainfall(
        Array2::from_shape_vec((1, 9), rain).unwrap().view(),
        &BfpfConfig::default().params(),
    );
    let temporal = TemporalFocus { alpha: 0.7 };
    let s = random_scores(&mut rng, 4, 9);
    let (mut a, mut b) = (s.clone(), s);
    focus.apply(&mut a).unwrap();
    temporal.apply(&mut a).unwrap();
    temporal.apply(&mut b).unwrap();
    focus.apply(&mut b).unwrap();
    // additive, so only rounding order differs
    assert!(a
        .iter()
        .zip(&b)
        .all(|(x, y)| (x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0)));
    let mut wrong = Array4::zeros((1, 1, 2, 8));
    assert!(focus.apply(&mut wrong).is_err());
}

#[test]
fn attention_with_dry_window_is_unbiased() {
    let mut rng = Seed(11).rng();
    let q = Array4::from_shape_fn((1, 2, 5, 4), |_| StandardNormal.sample(&mut rng));
    let k = Array4::from_shape_fn((1, 2, 5, 4), |_| StandardNormal.sample(&mut rng));
    let v = Array4::from_shape_fn((1, 2, 5, 3), |_| StandardNormal.sample(&mut rng));
    let mut params = BfpfConfig::default().params();
    params.lambda_scale = 5.0;
    let dry = NonZeroFocus::from_rainfall(Array2::zeros((1, 5)).view(), &params);
    let plain = attention_forward(q.view(), k.view(), v.view(), &[]).unwrap();
    let biased = attention_forward(q.view(), k.view(), v.view(), &[&dry]).unwrap();
    assert_eq!(plain.context, biased.context);
}

#[test]
fn zero_scales_reproduce_plain_transformer() {
    let plain_cfg = TransformerConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        ff_dim: 32,
        ..Default::default()
    };
    let mut biased_cfg = plain_cfg.clone();
    biased_cfg.bfpf = BfpfConfig {
        enabled: true,
        lambda_init: 0.0,
        alpha_init: 0.0,
        ..Default::default()
    };
    let plain = ModelSpec::Transformer(plain_cfg).build("p", 12, 4, Seed(77)).unwrap();
    let biased = ModelSpec::Transformer(biased_cfg).build("b", 12, 4, Seed(77)).unwrap();
    for s in random_samples(100, 12, 4, 0.8, 12) {
        let a = plain.predict(s.x.view(), &s.x_raw_tp).unwrap();
        let b = biased.predict(s.x.view(), &s.x_raw_tp).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn distances_are_sentinel_exactly_at_zeros(x in prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..30.0], 1..64)) {
        let l = x.len();
        let d = zero_distance(Array2::from_shape_vec((1, l), x.clone()).unwrap().view(), DEFAULT_SENTINEL);
        for t in 0..l {
            let v = d[[0, t]];
            if x[t] == 0.0 {
                prop_assert_eq!(v, DEFAULT_SENTINEL);
            } else {
                prop_assert!(v >= 1.0 && v.fract() == 0.0);
            }
        }
        let w = proximity_weights(d.view(), 2.0);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
