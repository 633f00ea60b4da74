//! Shared helpers for unit tests: seeded random tensors and a central
//! finite-difference gradient checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub(crate) fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

pub(crate) const FD_STEP: f64 = 1e-4;

/// Largest relative disagreement between `analytic` and a central
/// finite-difference estimate of d objective / d x.
pub(crate) fn fd_max_rel_error(x: &Tensor, analytic: &Tensor, objective: impl Fn(&Tensor) -> f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP;
        let numeric = (objective(&plus) - objective(&minus)) / (2.0 * FD_STEP);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
