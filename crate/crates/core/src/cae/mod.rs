//! The symmetric convolutional autoencoder and its rate-distortion loss.
//!
//! The encoder stacks three downsampling units, each a stride-2 conv
//! followed by a stride-1 conv, every conv followed by PReLU. A patch of
//! extent P therefore maps to feature maps of extent P/8. The decoder
//! mirrors the encoder with transposed convolutions in three upsampling
//! units ([stride 1, stride 2] each); its final layer is linear so outputs
//! can approach 0 and 1 from either side.
//!
//! The training loss is
//!   J = mean((x - decode(encode(x) + noise))^2) + lambda * mean(encode(x)^2)
//! with `noise` i.i.d. uniform on [-halfwidth, +halfwidth], standing in for
//! quantization during optimization. Both norms are means over elements so
//! lambda keeps its meaning across patch sizes.

mod checkpoint;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use network::{
    decode, decode_cached, encode, encode_cached, loss, loss_with_noise, CaeArchitecture,
    CaeGrads, CaeParams, ConvLayer, LayerGrads, LossOutput,
};
pub use train::{
    train, write_loss_csv, FixedPatches, LossRecord, PatchSource, TrainConfig, TrainOutcome,
    TrainState,
};
