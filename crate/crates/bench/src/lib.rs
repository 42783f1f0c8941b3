//! Shared fixtures for the training benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use somgmm::synthetic::stroke_images;
use somgmm::{DataSet, MixtureModel, TrainConfig};

/// Synthetic 28x28 stroke images scaled to `[0, 1]`.
pub fn images(n: usize) -> DataSet {
    stroke_images(n, 7).expect("stroke images").data
}

/// Tied model with `k` centroids scattered around mid-grey, sized for `images`.
pub fn image_model(k: usize, dim: usize) -> MixtureModel {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centroids = Array2::from_shape_fn((k, dim), |_| 0.5 + rng.random_range(-0.01..0.01));
    MixtureModel::tied(centroids, 5.0).expect("valid model")
}

/// Reference-style smoothed run over `iterations` steps on a `k`-unit map.
pub fn image_config(k: usize, iterations: u64) -> TrainConfig {
    let mut config = TrainConfig::reference(k, iterations, 1).expect("valid config");
    config.history_every = iterations;
    config
}
