#![allow(dead_code)]

use finiagg::{
    collect_votes, generate_offsets, train_ensemble, AggregationConfig, Dataset, LabeledSample,
    LearnerKind, LearnerSpec, OffsetMode, SpreadOffsets, VoteMatrix,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Class `c` is centred at `means[c]`; features are rounded Gaussian draws
/// clamped at zero.
pub fn integer_gaussian(
    rng: &mut ChaCha8Rng,
    means: &[Vec<f64>],
    sigma: f64,
    n: usize,
) -> Vec<LabeledSample> {
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..n)
        .map(|t| {
            let c = t % means.len();
            let features = means[c]
                .iter()
                .map(|&m| (m + noise.sample(rng)).round().max(0.0) as u64)
                .collect();
            LabeledSample::new(features, c)
        })
        .collect()
}

pub fn random_offsets(rng: &mut ChaCha8Rng, k: usize, d: usize) -> SpreadOffsets {
    generate_offsets(k, d, rng.gen(), OffsetMode::Seeded).unwrap()
}

pub fn random_row(rng: &mut ChaCha8Rng, kd: usize, n_classes: usize) -> Vec<usize> {
    // Skew votes toward class 0 half the time so large margins show up.
    let bias = rng.gen_bool(0.5);
    (0..kd)
        .map(|_| {
            if bias && rng.gen_bool(0.6) {
                0
            } else {
                rng.gen_range(0..n_classes)
            }
        })
        .collect()
}

pub fn run_pipeline(
    train: &Dataset,
    test: &Dataset,
    k: usize,
    d: usize,
    seed: u64,
    kind: LearnerKind,
) -> VoteMatrix {
    let config = AggregationConfig::new(k, d, seed, train.n_classes()).unwrap();
    let offsets = generate_offsets(k, d, seed, OffsetMode::DpaCompatible).unwrap();
    let models = train_ensemble(train, &config, &offsets, &LearnerSpec::new(kind)).unwrap();
    collect_votes(&models, &test.features(), &config, &offsets, Some(test.labels())).unwrap()
}
