//! 2-D convolution and transposed convolution with exact analytic gradients.
//!
//! All kernels are 3x3 with zero padding 1 and stride 1 or 2, which is the
//! only geometry the network uses. With stride 2 the transposed direction
//! appends one row/column of output padding so that a stride-2 downsample
//! followed by a stride-2 upsample restores even extents exactly
//! (H -> H/2 -> H).
//!
//! `transposed_conv2d(y; K)` is the exact adjoint of `conv2d(x; K)` for the
//! shared kernel tensor: <conv2d(x), y> == <x, transposed_conv2d(y)> when
//! both run without bias. Convolution kernels are stored
//! (out_channels, in_channels, 3, 3); the transposed direction reads the
//! same layout as (its in_channels, its out_channels, 3, 3).
//!
//! Internally each sample is lowered to an im2col matrix and the channel
//! mixing is a small dense matrix product, which keeps the inner loops
//! contiguous and lets the compiler vectorize them.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const KERNEL_SIZE: usize = 3;
pub const PADDING: usize = 1;

/// Output spatial extent of a 3x3/pad-1 convolution.
pub fn conv_out_extent(n: usize, stride: usize) -> usize {
    (n + 2 * PADDING - KERNEL_SIZE) / stride + 1
}

/// Output spatial extent of the transposed direction (with output padding
/// stride-1, so stride 1 preserves and stride 2 exactly doubles).
pub fn tconv_out_extent(n: usize, stride: usize) -> usize {
    (n - 1) * stride + KERNEL_SIZE - 2 * PADDING + (stride - 1)
}

fn check_stride(context: &'static str, stride: usize) -> Result<()> {
    if stride == 1 || stride == 2 {
        Ok(())
    } else {
        Err(Error::invalid(context, format!("stride must be 1 or 2, got {stride}")))
    }
}

/// c(m x n) += a(m x k) * b(k x n), all row-major.
fn gemm_acc<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv = *cv + aip * bv;
            }
        }
    }
}

/// c(m x k) += a(m x n) * b(k x n)^T, all row-major.
fn gemm_abt_acc<T: Scalar>(a: &[T], m: usize, n: usize, b: &[T], k: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc = acc + av * bv;
            }
            c[i * k + j] = c[i * k + j] + acc;
        }
    }
}

/// c(k x n) += a(m x k)^T * b(m x n), all row-major.
fn gemm_atb_acc<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv = *cv + aip * bv;
            }
        }
    }
}

/// Lower one sample (C, H, W) to a (C*9, OH*OW) patch matrix.
fn im2col<T: Scalar>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    col: &mut [T],
) {
    debug_assert_eq!(col.len(), channels * KERNEL_SIZE * KERNEL_SIZE * oh * ow);
    let n = oh * ow;
    col.fill(T::zero());
    for c in 0..channels {
        let xc = &x[c * h * w..(c + 1) * h * w];
        for u in 0..KERNEL_SIZE {
            for v in 0..KERNEL_SIZE {
                let row = (c * KERNEL_SIZE + u) * KERNEL_SIZE + v;
                let crow = &mut col[row * n..(row + 1) * n];
                for ohi in 0..oh {
                    let ih = (ohi * stride + u) as isize - PADDING as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let xrow = &xc[ih as usize * w..(ih as usize + 1) * w];
                    let base = ohi * ow;
                    for owi in 0..ow {
                        let iw = (owi * stride + v) as isize - PADDING as isize;
                        if iw >= 0 && iw < w as isize {
                            crow[base + owi] = xrow[iw as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-add the patch matrix back into (C, H, W).
fn col2im_acc<T: Scalar>(
    col: &[T],
    channels: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    x: &mut [T],
) {
    debug_assert_eq!(col.len(), channels * KERNEL_SIZE * KERNEL_SIZE * oh * ow);
    debug_assert_eq!(x.len(), channels * h * w);
    let n = oh * ow;
    for c in 0..channels {
        let xc = &mut x[c * h * w..(c + 1) * h * w];
        for u in 0..KERNEL_SIZE {
            for v in 0..KERNEL_SIZE {
                let row = (c * KERNEL_SIZE + u) * KERNEL_SIZE + v;
                let crow = &col[row * n..(row + 1) * n];
                for ohi in 0..oh {
                    let ih = (ohi * stride + u) as isize - PADDING as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let xrow = &mut xc[ih as usize * w..(ih as usize + 1) * w];
                    let base = ohi * ow;
                    for owi in 0..ow {
                        let iw = (owi * stride + v) as isize - PADDING as isize;
                        if iw >= 0 && iw < w as isize {
                            xrow[iw as usize] = xrow[iw as usize] + crow[base + owi];
                        }
                    }
                }
            }
        }
    }
}

fn check_conv_args<T: Scalar>(
    context: &'static str,
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    bias_channels: usize,
    input_channels: usize,
) -> Result<()> {
    check_stride(context, stride)?;
    if input.rank() != 4 {
        return Err(Error::shape(context, "rank-4 input", format!("rank {}", input.rank())));
    }
    if kernels.rank() != 4 || kernels.shape()[2] != KERNEL_SIZE || kernels.shape()[3] != KERNEL_SIZE {
        return Err(Error::shape(
            context,
            "(co, ci, 3, 3) kernels",
            format!("{:?}", kernels.shape()),
        ));
    }
    if input.shape()[1] != input_channels {
        return Err(Error::shape(
            context,
            format!("{} input channels", input_channels),
            format!("{}", input.shape()[1]),
        ));
    }
    if let Some(b) = bias {
        if b.numel() != bias_channels {
            return Err(Error::shape(
                context,
                format!("bias of length {}", bias_channels),
                format!("length {}", b.numel()),
            ));
        }
    }
    Ok(())
}

/// Cross-correlation with zero padding 1. `kernels` is (Co, Ci, 3, 3);
/// input (B, Ci, H, W) maps to (B, Co, H', W').
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (co, ci) = (kernels.shape()[0], kernels.shape()[1]);
    check_conv_args("conv2d", input, kernels, bias, stride, co, ci)?;
    let (batch, h, w) = (input.shape()[0], input.shape()[2], input.shape()[3]);
    let (oh, ow) = (conv_out_extent(h, stride), conv_out_extent(w, stride));
    let n = oh * ow;
    let k = ci * KERNEL_SIZE * KERNEL_SIZE;

    let mut out = Tensor::zeros(&[batch, co, oh, ow]);
    let mut col = vec![T::zero(); k * n];
    for b in 0..batch {
        let xin = &input.data()[b * ci * h * w..(b + 1) * ci * h * w];
        im2col(xin, ci, h, w, oh, ow, stride, &mut col);
        let oslice = &mut out.data_mut()[b * co * n..(b + 1) * co * n];
        if let Some(bias) = bias {
            for o in 0..co {
                oslice[o * n..(o + 1) * n].fill(bias.data()[o]);
            }
        }
        gemm_acc(kernels.data(), co, k, &col, n, oslice);
    }
    Ok(out)
}

/// Exact gradients of [`conv2d`] with respect to input, kernels, and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_output: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (co, ci) = (kernels.shape()[0], kernels.shape()[1]);
    check_conv_args("conv2d_backward", input, kernels, None, stride, co, ci)?;
    let (batch, h, w) = (input.shape()[0], input.shape()[2], input.shape()[3]);
    let (oh, ow) = (conv_out_extent(h, stride), conv_out_extent(w, stride));
    let expected = [batch, co, oh, ow];
    if grad_output.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("{:?}", expected),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let n = oh * ow;
    let k = ci * KERNEL_SIZE * KERNEL_SIZE;

    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_kernels = Tensor::zeros(kernels.shape());
    let mut grad_bias = Tensor::zeros(&[co]);
    let mut col = vec![T::zero(); k * n];
    let mut gcol = vec![T::zero(); k * n];

    for b in 0..batch {
        let gout = &grad_output.data()[b * co * n..(b + 1) * co * n];
        for o in 0..co {
            let s: T = gout[o * n..(o + 1) * n].iter().copied().sum();
            grad_bias.data_mut()[o] = grad_bias.data_mut()[o] + s;
        }
        let xin = &input.data()[b * ci * h * w..(b + 1) * ci * h * w];
        im2col(xin, ci, h, w, oh, ow, stride, &mut col);
        gemm_abt_acc(gout, co, n, &col, k, grad_kernels.data_mut());
        gcol.fill(T::zero());
        gemm_atb_acc(kernels.data(), co, k, gout, n, &mut gcol);
        let gin = &mut grad_input.data_mut()[b * ci * h * w..(b + 1) * ci * h * w];
        col2im_acc(&gcol, ci, h, w, oh, ow, stride, gin);
    }
    Ok((grad_input, grad_kernels, grad_bias))
}

/// Transposed convolution: the adjoint of [`conv2d`] for the same kernel
/// tensor. `kernels` is (Ci_t, Co_t, 3, 3) for this op's own channel
/// counts; input (B, Ci_t, h, w) maps to (B, Co_t, h*stride, w*stride).
pub fn transposed_conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (ci_t, co_t) = (kernels.shape()[0], kernels.shape()[1]);
    check_conv_args("transposed_conv2d", input, kernels, bias, stride, co_t, ci_t)?;
    let (batch, h, w) = (input.shape()[0], input.shape()[2], input.shape()[3]);
    let (out_h, out_w) = (tconv_out_extent(h, stride), tconv_out_extent(w, stride));
    let n = h * w;
    let k = co_t * KERNEL_SIZE * KERNEL_SIZE;

    let mut out = Tensor::zeros(&[batch, co_t, out_h, out_w]);
    let mut gcol = vec![T::zero(); k * n];
    for b in 0..batch {
        let xin = &input.data()[b * ci_t * n..(b + 1) * ci_t * n];
        gcol.fill(T::zero());
        gemm_atb_acc(kernels.data(), ci_t, k, xin, n, &mut gcol);
        let oslice = &mut out.data_mut()[b * co_t * out_h * out_w..(b + 1) * co_t * out_h * out_w];
        col2im_acc(&gcol, co_t, out_h, out_w, h, w, stride, oslice);
        if let Some(bias) = bias {
            for c in 0..co_t {
                let bval = bias.data()[c];
                for v in &mut oslice[c * out_h * out_w..(c + 1) * out_h * out_w] {
                    *v = *v + bval;
                }
            }
        }
    }
    Ok(out)
}

/// Exact gradients of [`transposed_conv2d`].
pub fn transposed_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_output: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (ci_t, co_t) = (kernels.shape()[0], kernels.shape()[1]);
    check_conv_args("transposed_conv2d_backward", input, kernels, None, stride, co_t, ci_t)?;
    let (batch, h, w) = (input.shape()[0], input.shape()[2], input.shape()[3]);
    let (out_h, out_w) = (tconv_out_extent(h, stride), tconv_out_extent(w, stride));
    let expected = [batch, co_t, out_h, out_w];
    if grad_output.shape() != expected {
        return Err(Error::shape(
            "transposed_conv2d_backward",
            format!("{:?}", expected),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let n = h * w;
    let k = co_t * KERNEL_SIZE * KERNEL_SIZE;

    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_kernels = Tensor::zeros(kernels.shape());
    let mut grad_bias = Tensor::zeros(&[co_t]);
    let mut gcol = vec![T::zero(); k * n];

    for b in 0..batch {
        let gout = &grad_output.data()[b * co_t * out_h * out_w..(b + 1) * co_t * out_h * out_w];
        for c in 0..co_t {
            let s: T = gout[c * out_h * out_w..(c + 1) * out_h * out_w]
                .iter()
                .copied()
                .sum();
            grad_bias.data_mut()[c] = grad_bias.data_mut()[c] + s;
        }
        // Gradient wrt input is a plain convolution of grad_output by the
        // shared kernel; gradient wrt kernels pairs the input with the
        // im2col form of grad_output.
        im2col(gout, co_t, out_h, out_w, h, w, stride, &mut gcol);
        let xin = &input.data()[b * ci_t * n..(b + 1) * ci_t * n];
        let gin = &mut grad_input.data_mut()[b * ci_t * n..(b + 1) * ci_t * n];
        gemm_acc(kernels.data(), ci_t, k, &gcol, n, gin);
        gemm_abt_acc(xin, ci_t, n, &gcol, k, grad_kernels.data_mut());
    }
    Ok((grad_input, grad_kernels, grad_bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let input = Tensor::filled(&[1, 1, 3, 3], 1.0_f64);
        let mut kernels = Tensor::zeros(&[1, 1, 3, 3]);
        kernels.set4(0, 0, 1, 1, 1.0);
        let out = conv2d(&input, &kernels, None, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn stride2_ones_kernel_matches_direct_sum() {
        let input = Tensor::filled(&[1, 1, 4, 4], 1.0_f64);
        let kernels = Tensor::filled(&[1, 1, 3, 3], 1.0_f64);
        let out = conv2d(&input, &kernels, None, 2).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[4.0, 6.0, 6.0, 9.0]);
    }

    #[test]
    fn conv_shape_formula() {
        let input = Tensor::zeros(&[1, 1, 128, 128]);
        let kernels = Tensor::zeros(&[4, 1, 3, 3]);
        let out = conv2d::<f64>(&input, &kernels, None, 2).unwrap();
        assert_eq!(out.shape(), &[1, 4, 64, 64]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let input = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let kernels = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&input, &kernels, None, 1).is_err());
    }

    #[test]
    fn invalid_stride_is_an_error() {
        let input = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        let kernels = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(transposed_conv2d(&input, &kernels, None, 3).is_err());
    }

    #[test]
    fn zero_grad_output_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = rand_tensor(&[2, 3, 5, 5], &mut rng);
        let kernels = rand_tensor(&[4, 3, 3, 3], &mut rng);
        let gout = Tensor::zeros(&[2, 4, 3, 3]);
        let (gi, gk, gb) = conv2d_backward(&input, &kernels, &gout, 2).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gk.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tconv_shapes() {
        let input = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        let kernels = Tensor::zeros(&[2, 3, 3, 3]);
        let out = transposed_conv2d(&input, &kernels, None, 2).unwrap();
        assert_eq!(out.shape(), &[1, 3, 4, 4]);
        let out = transposed_conv2d(&input, &kernels, None, 1).unwrap();
        assert_eq!(out.shape(), &[1, 3, 2, 2]);
    }

    #[test]
    fn tconv_single_pixel_reads_center_weight() {
        let input = Tensor::filled(&[1, 1, 1, 1], 1.0_f64);
        let kernels = Tensor::filled(&[1, 1, 3, 3], 1.0_f64);
        let out = transposed_conv2d(&input, &kernels, None, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data()[0], 1.0);
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &stride in &[1_usize, 2] {
            for trial in 0..5 {
                let (ci, co, h, w) = (2 + trial % 2, 3, 6, 8);
                let x = rand_tensor(&[1, ci, h, w], &mut rng);
                let kernels = rand_tensor(&[co, ci, 3, 3], &mut rng);
                let oh = conv_out_extent(h, stride);
                let ow = conv_out_extent(w, stride);
                let y = rand_tensor(&[1, co, oh, ow], &mut rng);

                let cx = conv2d(&x, &kernels, None, stride).unwrap();
                let ty = transposed_conv2d(&y, &kernels, None, stride).unwrap();
                assert_eq!(ty.shape(), x.shape());

                let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
                let tol = 1e-10 * lhs.abs().max(rhs.abs()).max(1.0);
                assert!((lhs - rhs).abs() <= tol, "stride {stride}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn downsample_then_upsample_restores_even_extents() {
        for &n in &[8_usize, 10, 64, 128] {
            let down = conv_out_extent(n, 2);
            assert_eq!(down, n / 2);
            assert_eq!(tconv_out_extent(down, 2), n & !1);
        }
        assert_eq!(conv_out_extent(128, 2), 64);
        assert_eq!(tconv_out_extent(64, 2), 128);
    }
}
