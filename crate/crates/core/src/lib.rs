//! Lossy image codec built around a convolutional autoencoder transform.
//!
//! The pipeline maps an RGB image to YCbCr planes, splits each plane into
//! fixed-size patches, runs every patch through a learned encoder network,
//! rotates the latent vectors with a per-image PCA basis for energy
//! compaction, quantizes the rotated coefficients to fixed point, and
//! entropy-codes them bitplane by bitplane with an adaptive binary
//! arithmetic coder. The stream is embedded: any prefix ending at a
//! bitplane boundary is a valid lower-rate encoding, which is how rate
//! targets are met.
//!
//! Crate layout:
//! - [`tensor`] / [`nn`]: dense tensors plus the handful of differentiable
//!   ops the network needs (conv, transposed conv, PReLU, Adam).
//! - [`cae`]: the symmetric encoder/decoder network, loss, training loop,
//!   and checkpoint format.
//! - [`pca`]: covariance, Jacobi eigendecomposition, rotation, and the
//!   quantized side-information matrix.
//! - [`codec`]: scalar quantization, feature-map tiling, and the embedded
//!   bitplane coder.
//! - [`container`]: the `CAEC` file format and whole-image encode/decode.
//! - [`color`], [`patch`], [`pnm`], [`dataset`]: pixel plumbing.
//! - [`metrics`]: PSNR, MS-SSIM, RD curves, and BD-rate.

pub mod cae;
pub mod codec;
pub mod color;
pub mod container;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod patch;
pub mod pca;
pub mod pnm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

/// Bounds the global worker pool. Reads the `CAE_THREADS` environment
/// variable when `threads` is `None`. Safe to call more than once; only the
/// first call takes effect.
pub fn init_thread_pool(threads: Option<usize>) {
    let n = threads.or_else(|| {
        std::env::var("CAE_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}
