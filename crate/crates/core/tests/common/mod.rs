#![allow(dead_code)]

use ndarray::Array2;
use nowcast_core::models::WindowedSample;
use nowcast_core::Seed;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random normalized inputs with zero-inflated raw rainfall (`p_zero` dry hours).
pub fn random_samples(n: usize, l_in: usize, l_out: usize, p_zero: f64, seed: u64) -> Vec<WindowedSample> {
    let mut rng = Seed(seed).rng();
    (0..n)
        .map(|i| {
            let x = Array2::from_shape_fn((l_in, 6), |_| StandardNormal.sample(&mut rng));
            let x_raw_tp = (0..l_in)
                .map(|_| {
                    if rng.random_bool(p_zero) {
                        0.0
                    } else {
                        rng.random_range(0.1..8.0)
                    }
                })
                .collect();
            let y = (0..l_out).map(|_| rng.random_range(0.0..6.0)).collect();
            WindowedSample {
                x,
                x_raw_tp,
                y,
                start: i,
            }
        })
        .collect()
}

/// Raw rainfall row with at least one dry and one wet hour.
pub fn mixed_rain(rng: &mut impl Rng, l: usize, p_zero: f64) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..l)
            .map(|_| {
                if rng.random_bool(p_zero) {
                    0.0
                } else {
                    rng.random_range(0.1..10.0)
                }
            })
            .collect();
        if row.contains(&0.0) && row.iter().any(|&v| v > 0.0) {
            return row;
        }
    }
}

/// Quadratic-time zero distance straight from the definition.
pub fn zero_distance_oracle(x: &[f64], sentinel: f64) -> Vec<f64> {
    let zeros: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 0.0).collect();
    (0..x.len())
        .map(|t| {
            if x[t] == 0.0 {
                return sentinel;
            }
            let left = zeros
                .iter()
                .filter(|&&z| z < t)
                .map(|&z| (t - z) as f64)
                .fold(sentinel, f64::min);
            let right = zeros
                .iter()
                .filter(|&&z| z > t)
                .map(|&z| (z - t) as f64)
                .fold(sentinel, f64::min);
            left.min(right)
        })
        .collect()
}

/// Sequence of `l` values, each zero with probability `p_zero`.
pub fn zero_inflated(rng: &mut impl Rng, l: usize, p_zero: f64) -> Vec<f64> {
    (0..l)
        .map(|_| {
            if rng.random_bool(p_zero) {
                0.0
            } else {
                rng.random_range(0.1..20.0)
            }
        })
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// ADF t-statistic for `gamma` from exact rational normal equations at a given lag.
///
/// The levels are rescaled by a power of two so every entry is an integer; the
/// t-statistic is invariant to that scaling.
pub fn adf_t_oracle(x: &[f64], lag: usize, trend: bool) -> (f64, usize) {
    use num::bigint::BigInt;
    use num::rational::BigRational;
    use num::traits::{Float, One, Signed, ToPrimitive, Zero};

    let decoded: Vec<(u64, i16, i8)> = x.iter().map(|v| Float::integer_decode(*v)).collect();
    let shift = decoded
        .iter()
        .filter(|d| d.0 != 0)
        .map(|d| -(d.1 as i32))
        .max()
        .unwrap_or(0)
        .max(0);
    let ints: Vec<BigInt> = decoded
        .iter()
        .map(|&(m, e, s)| {
            let v = BigInt::from(m) << ((e as i32 + shift) as usize);
            if s < 0 {
                -v
            } else {
                v
            }
        })
        .collect();
    let dx: Vec<BigInt> = ints.windows(2).map(|w| &w[1] - &w[0]).collect();

    let rows: Vec<(Vec<BigInt>, BigInt)> = (lag..dx.len())
        .map(|j| {
            let mut r = vec![ints[j].clone(), BigInt::one()];
            if trend {
                r.push(BigInt::from(j + 1));
            }
            r.extend((1..=lag).map(|i| dx[j - i].clone()));
            (r, dx[j].clone())
        })
        .collect();
    let n = rows.len();
    let k = rows[0].0.len();
    let mut xtx = vec![vec![BigInt::zero(); k]; k];
    let mut xty = vec![BigInt::zero(); k];
    let mut yty = BigInt::zero();
    for (r, y) in &rows {
        for a in 0..k {
            for b in a..k {
                xtx[a][b] += &r[a] * &r[b];
            }
            xty[a] += &r[a] * y;
        }
        yty += y * y;
    }
    // augmented system [X'X | X'y | e0], Gauss-Jordan over the rationals
    let mut m: Vec<Vec<BigRational>> = (0..k)
        .map(|a| {
            let mut row: Vec<BigRational> = (0..k)
                .map(|b| BigRational::from_integer(if a <= b { xtx[a][b].clone() } else { xtx[b][a].clone() }))
                .collect();
            row.push(BigRational::from_integer(xty[a].clone()));
            row.push(if a == 0 {
                BigRational::one()
            } else {
                BigRational::zero()
            });
            row
        })
        .collect();
    for c in 0..k {
        let p = (c..k).find(|&r| !m[r][c].is_zero()).expect("singular design");
        m.swap(c, p);
        let piv = m[c][c].clone();
        for v in m[c].iter_mut() {
            *v = &*v / &piv;
        }
        let pivot_row = m[c].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != c && !row[c].is_zero() {
                let f = row[c].clone();
                for (v, p) in row.iter_mut().zip(&pivot_row).skip(c) {
                    *v -= &f * p;
                }
            }
        }
    }
    let beta: Vec<BigRational> = (0..k).map(|a| m[a][k].clone()).collect();
    let inv00 = m[0][k + 1].clone();
    let fitted: BigRational = beta
        .iter()
        .zip(&xty)
        .map(|(b, v)| b * BigRational::from_integer(v.clone()))
        .sum();
    let rss = BigRational::from_integer(yty) - fitted;
    let s2 = rss / BigRational::from_integer(BigInt::from(n - k));
    let t2 = &beta[0] * &beta[0] / (s2 * inv00);
    let t = t2.to_f64().unwrap().sqrt();
    (if beta[0].is_negative() { -t } else { t }, n)
}
