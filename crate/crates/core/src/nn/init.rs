//! Parameter initialization helpers.

use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Fill with zero-mean Gaussians, std = sqrt(2 / fan_in).
pub fn fill_he_normal<T: Scalar>(tensor: &mut Tensor<T>, fan_in: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid std");
    for v in tensor.data_mut() {
        *v = T::from_f64(dist.sample(rng));
    }
}

/// Fill i.i.d. uniform on [-halfwidth, +halfwidth].
pub fn fill_uniform_symmetric<T: Scalar>(
    tensor: &mut Tensor<T>,
    halfwidth: f64,
    rng: &mut ChaCha8Rng,
) {
    for v in tensor.data_mut() {
        *v = T::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * halfwidth);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_noise_statistics() {
        // Mean over many draws stays within 3 sigma of zero and the
        // halfwidth bound is never exceeded.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hw = 1.0 / 1024.0;
        let n = 1_000_000usize;
        let mut t = Tensor::<f64>::zeros(&[n]);
        fill_uniform_symmetric(&mut t, hw, &mut rng);
        let mean = t.mean();
        let sigma_of_mean = hw / (3.0_f64).sqrt() / (n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sigma_of_mean, "mean {mean}");
        assert!(t.max_abs() <= hw);
    }

    #[test]
    fn he_init_is_seeded_and_deterministic() {
        let mut a = Tensor::<f64>::zeros(&[64]);
        let mut b = Tensor::<f64>::zeros(&[64]);
        fill_he_normal(&mut a, 9, &mut ChaCha8Rng::seed_from_u64(1));
        fill_he_normal(&mut b, 9, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.data(), b.data());
    }
}
