//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rats_core::{Categorical, StateMetric};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A dense random distribution over `n` states.
pub fn random_categorical(n: usize, rng: &mut impl Rng) -> Categorical {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = w.iter().sum();
    Categorical::new(w.iter().map(|x| x / total).collect()).expect("normalized weights")
}

/// Manhattan metric on a `side x side` grid.
pub fn grid_metric(side: usize) -> StateMetric {
    let coords: Vec<(i32, i32)> = (0..side * side)
        .map(|i| ((i / side) as i32, (i % side) as i32))
        .collect();
    StateMetric::manhattan(&coords, 1.0).expect("valid grid")
}

/// Child values for every state, in `[-1, 1]`.
pub fn random_values(n: usize, rng: &mut impl Rng) -> Vec<(usize, f64)> {
    (0..n).map(|s| (s, rng.gen_range(-1.0..1.0))).collect()
}
