//! Seeded inputs shared by the benchmarks.

use ndarray::{Array2, Array4};
use nowcast_core::models::WindowedSample;
use nowcast_core::Seed;
use rand::Rng;

/// `b x l` rainfall with roughly 80% dry hours.
pub fn rain(b: usize, l: usize, seed: u64) -> Array2<f64> {
    let mut rng = Seed(seed).rng();
    Array2::from_shape_fn((b, l), |_| {
        if rng.random_bool(0.8) {
            0.0
        } else {
            rng.random_range(0.1..10.0)
        }
    })
}

pub fn tensor(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut rng = Seed(seed).rng();
    Array4::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn windows(n: usize, l_in: usize, l_out: usize, seed: u64) -> Vec<WindowedSample> {
    let mut rng = Seed(seed).rng();
    let r = rain(n, l_in, seed ^ 0x5eed);
    (0..n)
        .map(|i| WindowedSample {
            x: Array2::from_shape_fn((l_in, 6), |_| rng.random_range(-2.0..2.0)),
            x_raw_tp: r.row(i).to_vec(),
            y: (0..l_out).map(|_| rng.random_range(0.0..5.0)).collect(),
            start: i,
        })
        .collect()
}
