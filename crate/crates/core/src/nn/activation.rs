//! Parametric ReLU with a learnable slope per channel.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn check<T: Scalar>(context: &'static str, input: &Tensor<T>, slope: &Tensor<T>) -> Result<()> {
    if input.rank() != 4 {
        return Err(Error::shape(context, "rank-4 input", format!("rank {}", input.rank())));
    }
    if slope.numel() != input.shape()[1] {
        return Err(Error::shape(
            context,
            format!("per-channel slope of length {}", input.shape()[1]),
            format!("length {}", slope.numel()),
        ));
    }
    Ok(())
}

/// out = x for x >= 0, slope_c * x otherwise.
pub fn prelu<T: Scalar>(input: &Tensor<T>, slope: &Tensor<T>) -> Result<Tensor<T>> {
    check("prelu", input, slope)?;
    let (b, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let plane = h * w;
    let mut out = Tensor::zeros(input.shape());
    for bi in 0..b {
        for ci in 0..c {
            let a = slope.data()[ci];
            let base = (bi * c + ci) * plane;
            let src = &input.data()[base..base + plane];
            let dst = &mut out.data_mut()[base..base + plane];
            for (d, &x) in dst.iter_mut().zip(src.iter()) {
                *d = if x >= T::zero() { x } else { a * x };
            }
        }
    }
    Ok(out)
}

/// grad_input = g * (1 if x >= 0 else slope_c);
/// grad_slope_c = sum over negative x of g * x.
pub fn prelu_backward<T: Scalar>(
    input: &Tensor<T>,
    slope: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check("prelu_backward", input, slope)?;
    if !input.same_shape(grad_output) {
        return Err(Error::shape(
            "prelu_backward",
            format!("{:?}", input.shape()),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let (b, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let plane = h * w;
    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_slope = Tensor::zeros(&[c]);
    for bi in 0..b {
        for ci in 0..c {
            let a = slope.data()[ci];
            let base = (bi * c + ci) * plane;
            let src = &input.data()[base..base + plane];
            let g = &grad_output.data()[base..base + plane];
            let dst = &mut grad_input.data_mut()[base..base + plane];
            let mut ga = T::zero();
            for i in 0..plane {
                let x = src[i];
                if x >= T::zero() {
                    dst[i] = g[i];
                } else {
                    dst[i] = g[i] * a;
                    ga = ga + g[i] * x;
                }
            }
            grad_slope.data_mut()[ci] = grad_slope.data_mut()[ci] + ga;
        }
    }
    Ok((grad_input, grad_slope))
}
