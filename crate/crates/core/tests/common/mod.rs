#![allow(dead_code)]

use corrfilter_core::SymmetricMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `X X' / k + delta I` with `X` Gaussian `p x k`.
pub fn random_spd(p: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = p + 3;
    let x = DMatrix::<f64>::from_fn(p, k, |_, _| rng.sample(StandardNormal));
    let m = &x * x.transpose() / k as f64 + DMatrix::identity(p, p) * 0.05;
    SymmetricMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Sample correlation matrix of `n` Gaussian observations with a
/// one-factor population, so entries are mostly positive.
pub fn random_correlation(p: usize, n: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loading: f64 = rng.random_range(0.0..0.8);
    let mut y = DMatrix::<f64>::zeros(p, n);
    for t in 0..n {
        let f: f64 = rng.sample(StandardNormal);
        for i in 0..p {
            let e: f64 = rng.sample(StandardNormal);
            y[(i, t)] = loading * f + (1.0 - loading * loading).sqrt() * e;
        }
    }
    for mut row in y.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
        let sd = (row.norm_squared() / n as f64).sqrt();
        row /= sd;
    }
    let e = &y * y.transpose() / n as f64;
    let mut e = (&e + e.transpose()) * 0.5;
    e.fill_diagonal(1.0);
    SymmetricMatrix::new(e).unwrap()
}

pub fn dim_and_seed(max_p: usize) -> impl Strategy<Value = (usize, u64)> {
    (2..=max_p, any::<u64>())
}
