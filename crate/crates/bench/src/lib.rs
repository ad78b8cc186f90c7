//! Shared fixtures for the benchmarks.

use wat_core::rng::{substream, Tag};
use wat_core::{gaussian_mixture, ClassSpec, Dataset, Matrix, MixtureSpec, ModelParams};

/// `classes` Gaussian blobs in `[0,1]^dim` with `per_class` points each.
pub fn mixture(classes: usize, dim: usize, per_class: usize, seed: u64) -> Dataset {
    let spec = MixtureSpec {
        classes: (0..classes)
            .map(|k| ClassSpec {
                mean: (0..dim).map(|j| 0.2 + 0.6 * ((k + j) % classes) as f64 / classes as f64).collect(),
                std: 0.1,
                count: per_class,
            })
            .collect(),
        domain: (0.0, 1.0),
        seed,
    };
    gaussian_mixture(&spec).expect("valid fixture")
}

pub fn linear(classes: usize, dim: usize, seed: u64) -> ModelParams {
    use rand::Rng;
    let mut rng = substream(seed, Tag::Init, 1);
    let w = (0..classes * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    ModelParams::linear(Matrix::from_vec(classes, dim, w).expect("shape")).expect("finite")
}

pub fn mlp(classes: usize, dim: usize, hidden: usize, seed: u64) -> ModelParams {
    ModelParams::mlp_init(classes, dim, hidden, &mut substream(seed, Tag::Init, 2))
}
