//! Shared helpers for the integration suites: random tensors with a
//! kink-avoidance floor, central finite differences, and toy networks.

use caecodec::cae::{CaeArchitecture, CaeParams};
use caecodec::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in [-scale, scale] with |v| >= min_abs, so piecewise
/// ops are never probed at their kinks by finite differences.
pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64, min_abs: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
            if v.abs() >= min_abs {
                break v;
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// `|analytic - fd| <= atol + rtol * max(|analytic|, |fd|)`.
pub fn gradient_close(analytic: f64, fd: f64, rtol: f64, atol: f64) -> bool {
    (analytic - fd).abs() <= atol + rtol * analytic.abs().max(fd.abs())
}

/// Central finite difference of `f` in one coordinate of `x`.
pub fn central_diff<F: FnMut(&Tensor<f64>) -> f64>(
    x: &Tensor<f64>,
    idx: usize,
    h: f64,
    mut f: F,
) -> f64 {
    let mut plus = x.clone();
    plus.data_mut()[idx] += h;
    let mut minus = x.clone();
    minus.data_mut()[idx] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn tiny_arch() -> CaeArchitecture {
    CaeArchitecture {
        filter_counts: [2, 2, 2, 2, 2, 2],
        patch_size: 8,
    }
}

pub fn tiny_params(seed: u64) -> CaeParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CaeParams::init(&tiny_arch(), &mut rng).unwrap()
}
