//! Minimal numeric kernel: tensors, parameters, losses, AdamW, schedules and
//! the finite-difference oracle used to check every analytic gradient.

mod ops;
mod optim;
mod tensor;

pub use ops::{
    cosine_similarity, finite_difference_grad, max_relative_error, softmax_cross_entropy,
    NumericsError, MIN_NORM,
};
pub use optim::{adamw_step, cosine_decay_lr, AdamWConfig, LrSchedule};
pub use tensor::{Param, Tensor2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// The crate's one RNG flavor. ChaCha8 is seedable, serializable via
/// (seed, word position), and identical across platforms.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fresh tensor with i.i.d. N(0, std^2) entries drawn in row-major order.
pub fn gaussian_tensor(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Tensor2 {
    let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor2::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_tensor_is_seed_deterministic() {
        let a = gaussian_tensor(3, 4, 0.5, &mut seeded_rng(9));
        let b = gaussian_tensor(3, 4, 0.5, &mut seeded_rng(9));
        assert!(a.bits_eq(&b));
    }
}
