//! The differentiable operations the autoencoder is built from.
//!
//! This is deliberately not a general autodiff engine: the network only
//! needs 2-D convolution, its transpose, PReLU, and Adam, so each op ships
//! its exact analytic backward pass and nothing else.

mod activation;
mod adam;
mod conv;
mod init;

pub use activation::{prelu, prelu_backward};
pub use adam::{adam_update_tensor, AdamHyper, AdamState};
pub use conv::{
    conv2d, conv2d_backward, conv_out_extent, transposed_conv2d, transposed_conv2d_backward,
    tconv_out_extent, KERNEL_SIZE, PADDING,
};
pub use init::{fill_he_normal, fill_uniform_symmetric};
