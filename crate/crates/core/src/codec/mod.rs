//! Coefficient coding: fixed-point quantization of rotated latents,
//! vertical-scan tiling of feature maps into one grid, and an embedded
//! bitplane entropy coder with rate-targeted truncation.

mod arith;
mod bitplane;
mod quant;

pub use arith::{ArithDecoder, ArithEncoder, BinaryContext};
pub use bitplane::{decode_plane, encode_plane, RateTarget, PLANE_HEADER_BYTES};
pub use quant::{
    dequantize, quantize, tile_grid_shape, tile_vertical_scan, untile_vertical_scan, Grid,
    QuantizedPlane, DEFAULT_PRECISION_BITS,
};
