//! Finite-difference oracles for every differentiable op and the full
//! loss, at 64-bit precision across many seeds. Convolutions are linear
//! in each argument, so central differences are exact up to roundoff
//! there; the composed loss is held to a looser bound.

mod common;

use caecodec::cae::{loss_with_noise, CaeParams};
use caecodec::nn::{
    conv2d, conv2d_backward, conv_out_extent, prelu, prelu_backward, transposed_conv2d,
    transposed_conv2d_backward, tconv_out_extent,
};
use caecodec::Tensor;
use common::{central_diff, gradient_close, rand_tensor, tiny_arch, tiny_params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const OP_RTOL: f64 = 1e-6;
const OP_ATOL: f64 = 1e-8;

fn weighted_sum(t: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    t.data().iter().zip(w.data().iter()).map(|(a, b)| a * b).sum()
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stride = 1 + (seed as usize % 2);
        let (b, ci, co, hdim, wdim) = (2, 2, 3, 5, 5);
        let input = rand_tensor(&[b, ci, hdim, wdim], &mut rng, 1.0, 0.0);
        let kernels = rand_tensor(&[co, ci, 3, 3], &mut rng, 1.0, 0.0);
        let bias = rand_tensor(&[co], &mut rng, 0.5, 0.0);
        let (oh, ow) = (conv_out_extent(hdim, stride), conv_out_extent(wdim, stride));
        let w = rand_tensor(&[b, co, oh, ow], &mut rng, 1.0, 0.0);

        let (gi, gk, gb) = conv2d_backward(&input, &kernels, &w, stride).unwrap();

        for idx in 0..input.numel() {
            let fd = central_diff(&input, idx, H, |x| {
                weighted_sum(&conv2d(x, &kernels, Some(&bias), stride).unwrap(), &w)
            });
            assert!(
                gradient_close(gi.data()[idx], fd, OP_RTOL, OP_ATOL),
                "seed {seed} input[{idx}]: {} vs {fd}",
                gi.data()[idx]
            );
        }
        for idx in 0..kernels.numel() {
            let fd = central_diff(&kernels, idx, H, |k| {
                weighted_sum(&conv2d(&input, k, Some(&bias), stride).unwrap(), &w)
            });
            assert!(
                gradient_close(gk.data()[idx], fd, OP_RTOL, OP_ATOL),
                "seed {seed} kernel[{idx}]: {} vs {fd}",
                gk.data()[idx]
            );
        }
        for idx in 0..bias.numel() {
            let fd = central_diff(&bias, idx, H, |bb| {
                weighted_sum(&conv2d(&input, &kernels, Some(bb), stride).unwrap(), &w)
            });
            assert!(
                gradient_close(gb.data()[idx], fd, OP_RTOL, OP_ATOL),
                "seed {seed} bias[{idx}]: {} vs {fd}",
                gb.data()[idx]
            );
        }
    }
}

#[test]
fn conv2d_scalar_center_weight_gradient() {
    // For a 1x1 input with pad 1, only the center tap sees the pixel, so
    // dL/dK[center] = v * grad_out.
    let input = Tensor::from_vec(&[1, 1, 1, 1], vec![0.7]).unwrap();
    let kernels = Tensor::from_vec(&[1, 1, 3, 3], vec![0.1; 9]).unwrap();
    let gout = Tensor::from_vec(&[1, 1, 1, 1], vec![2.5]).unwrap();
    let (_, gk, _) = conv2d_backward(&input, &kernels, &gout, 1).unwrap();
    let center = 4;
    assert!((gk.data()[center] - 0.7 * 2.5).abs() < 1e-12);
    let fd = central_diff(&kernels, center, H, |k| {
        weighted_sum(&conv2d(&input, k, None, 1).unwrap(), &gout)
    });
    assert!(gradient_close(gk.data()[center], fd, OP_RTOL, OP_ATOL));
}

#[test]
fn transposed_conv2d_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let stride = 1 + (seed as usize % 2);
        let (b, ci, co, hdim, wdim) = (2, 3, 2, 4, 3);
        let input = rand_tensor(&[b, ci, hdim, wdim], &mut rng, 1.0, 0.0);
        let kernels = rand_tensor(&[ci, co, 3, 3], &mut rng, 1.0, 0.0);
        let bias = rand_tensor(&[co], &mut rng, 0.5, 0.0);
        let (oh, ow) = (tconv_out_extent(hdim, stride), tconv_out_extent(wdim, stride));
        let w = rand_tensor(&[b, co, oh, ow], &mut rng, 1.0, 0.0);

        let (gi, gk, gb) = transposed_conv2d_backward(&input, &kernels, &w, stride).unwrap();

        for idx in 0..input.numel() {
            let fd = central_diff(&input, idx, H, |x| {
                weighted_sum(&transposed_conv2d(x, &kernels, Some(&bias), stride).unwrap(), &w)
            });
            assert!(
                gradient_close(gi.data()[idx], fd, OP_RTOL, OP_ATOL),
                "seed {seed} input[{idx}]"
            );
        }
        for idx in 0..kernels.numel() {
            let fd = central_diff(&kernels, idx, H, |k| {
                weighted_sum(&transposed_conv2d(&input, k, Some(&bias), stride).unwrap(), &w)
            });
            assert!(
                gradient_close(gk.data()[idx], fd, OP_RTOL, OP_ATOL),
                "seed {seed} kernel[{idx}]"
            );
        }
        for idx in 0..bias.numel() {
            let fd = central_diff(&bias, idx, H, |bb| {
                weighted_sum(&transposed_conv2d(&input, &kernels, Some(bb), stride).unwrap(), &w)
            });
            assert!(
                gradient_close(gb.data()[idx], fd, OP_RTOL, OP_ATOL),
                "seed {seed} bias[{idx}]"
            );
        }
    }
}

#[test]
fn prelu_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let shape = [2, 3, 4, 4];
        // Keep inputs away from the kink at zero.
        let input = rand_tensor(&shape, &mut rng, 1.0, 10.0 * H);
        let slope = rand_tensor(&[3], &mut rng, 0.5, 0.0);
        let w = rand_tensor(&shape, &mut rng, 1.0, 0.0);

        let (gi, gs) = prelu_backward(&input, &slope, &w).unwrap();
        for idx in 0..input.numel() {
            let fd = central_diff(&input, idx, H, |x| {
                weighted_sum(&prelu(x, &slope).unwrap(), &w)
            });
            assert!(gradient_close(gi.data()[idx], fd, OP_RTOL, OP_ATOL), "seed {seed}");
        }
        for idx in 0..slope.numel() {
            let fd = central_diff(&slope, idx, H, |s| {
                weighted_sum(&prelu(&input, s).unwrap(), &w)
            });
            assert!(gradient_close(gs.data()[idx], fd, OP_RTOL, OP_ATOL), "seed {seed}");
        }
    }
}

#[test]
fn adjointness_of_conv_and_transposed_conv() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let stride = 1 + (seed as usize % 2);
        let (ci, co, hdim, wdim) = (2, 3, 6, 8);
        let x = rand_tensor(&[1, ci, hdim, wdim], &mut rng, 1.0, 0.0);
        let kernels = rand_tensor(&[co, ci, 3, 3], &mut rng, 1.0, 0.0);
        let (oh, ow) = (conv_out_extent(hdim, stride), conv_out_extent(wdim, stride));
        let y = rand_tensor(&[1, co, oh, ow], &mut rng, 1.0, 0.0);

        let lhs = weighted_sum(&conv2d(&x, &kernels, None, stride).unwrap(), &y);
        let rhs = weighted_sum(&transposed_conv2d(&y, &kernels, None, stride).unwrap(), &x);
        assert!(
            (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0),
            "seed {seed}: {lhs} vs {rhs}"
        );
    }
}

/// Full rate-distortion loss on the tiny network against central
/// differences over every learnable parameter.
#[test]
fn loss_gradients_match_finite_differences() {
    let arch = tiny_arch();
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let params = tiny_params(500 + seed);
        let patch = rand_tensor(&[1, 1, 8, 8], &mut rng, 0.5, 0.0);
        let noise = rand_tensor(
            &[1, arch.filter_counts[5], 1, 1],
            &mut rng,
            1.0 / 1024.0,
            0.0,
        );
        let lambda = 1.0;

        let out = loss_with_noise(&params, &patch, lambda, &noise).unwrap();
        let flat_analytic = out.grads.flat();
        let named = params.named_params();

        for (tensor_idx, (name, tensor)) in named.iter().enumerate() {
            for idx in 0..tensor.numel() {
                let mut probe = |delta: f64| -> f64 {
                    let mut p: CaeParams<f64> = params.clone();
                    p.named_params_mut()[tensor_idx].1.data_mut()[idx] += delta;
                    loss_with_noise(&p, &patch, lambda, &noise).unwrap().j
                };
                let fd = (probe(H) - probe(-H)) / (2.0 * H);
                let analytic = flat_analytic[tensor_idx].data()[idx];
                assert!(
                    gradient_close(analytic, fd, 1e-4, 1e-7),
                    "seed {seed} {name}[{idx}]: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }
}
