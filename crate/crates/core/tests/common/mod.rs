#![allow(dead_code)]

use hdpo_lab::matrix::Matrix;
use hdpo_lab::preference::{PopulationWeights, PreferenceDataset, PreferencePair, RewardTable, TabularPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_policy(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> TabularPolicy {
    TabularPolicy::from_logits(normal_matrix(rng, rows, cols, 1.0)).unwrap()
}

pub fn random_reward(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RewardTable {
    RewardTable::new(normal_matrix(rng, rows, cols, 1.0)).unwrap()
}

/// Random positive weights on every off-diagonal ordered pair.
pub fn random_population(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> PreferenceDataset {
    let raw: Vec<f64> = (0..rows * cols * cols).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = (0..rows)
        .flat_map(|x| (0..cols).flat_map(move |a| (0..cols).map(move |b| (x, a, b))))
        .filter(|(_, a, b)| a != b)
        .map(|(x, a, b)| raw[(x * cols + a) * cols + b])
        .sum();
    let w = PopulationWeights::from_fn(rows, cols, |x, a, b| if a == b { 0.0 } else { raw[(x * cols + a) * cols + b] / total }).unwrap();
    PreferenceDataset::population(w)
}

pub fn random_pairs(rng: &mut ChaCha8Rng, rows: usize, cols: usize, n: usize) -> PreferenceDataset {
    let pairs = (0..n)
        .map(|_| {
            let x = rng.gen_range(0..rows);
            let a = rng.gen_range(0..cols);
            let b = (a + rng.gen_range(1..cols)) % cols;
            PreferencePair { x, y_w: a, y_l: b }
        })
        .collect();
    PreferenceDataset::sampled(pairs).unwrap()
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
