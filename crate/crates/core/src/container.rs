//! The `CAEC` container: header, per-plane PCA side information, and
//! entropy-coded patch payloads, plus full-image encode/decode.
//!
//! Layout, little-endian throughout:
//!   magic "CAEC", version u8,
//!   width u16, height u16 (original, pre-padding), patch_size u16,
//!   B u8 (quantizer precision), N6 u8 (latent channels),
//!   plane_count u8, model_id u64.
//! Then per color plane (Y, Cb, Cr): the quantized rotation-matrix block
//! (bits-per-entry u8, then N6^2 16-bit codes row-major) followed by one
//! coded-plane stream per patch in raster order.
//!
//! A rate target is split 6/8 : 1/8 : 1/8 across Y, Cb, Cr after paying
//! for the container header; within a plane, the rotation matrix is paid
//! first and the rest is divided evenly across patches. Reported bpp is
//! exactly file bits over original pixels, side information included.

use crate::cae::{decode as cae_decode, encode as cae_encode, CaeParams};
use crate::codec::{
    decode_plane, dequantize, encode_plane, quantize, tile_grid_shape, tile_vertical_scan,
    untile_vertical_scan, Grid, RateTarget, PLANE_HEADER_BYTES,
};
use crate::color::{rgb_to_ycbcr, ycbcr_to_rgb, Plane, PlanarImage, RgbImage};
use crate::error::{Error, Result};
use crate::patch::{merge_patches, split_patches, PatchGrid};
use crate::pca::{
    compute_covariance, dequantize_u, eigendecompose, inverse_rotate, quantize_u, rotate,
    LatentSamples, QuantizedMatrix, U_QUANT_BITS,
};
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

const MAGIC: &[u8; 4] = b"CAEC";
const VERSION: u8 = 1;
const HEADER_BYTES: usize = 4 + 1 + 2 + 2 + 2 + 1 + 1 + 1 + 8;
const PLANE_WEIGHTS: [u64; 3] = [6, 1, 1];

pub use crate::codec::DEFAULT_PRECISION_BITS;

#[derive(Debug, Clone)]
pub struct EncodedImage {
    pub bytes: Vec<u8>,
    pub width: usize,
    pub height: usize,
}

impl EncodedImage {
    /// Total file bits over original pixel count, exactly.
    pub fn bpp(&self) -> f64 {
        (self.bytes.len() * 8) as f64 / (self.width * self.height) as f64
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecodeReport {
    /// The container was produced by a different model checkpoint.
    pub model_id_mismatch: bool,
}

fn plane_to_tensor<T: Scalar>(plane: &Plane) -> Tensor<T> {
    let data = plane.data.iter().map(|&v| T::from_f64(v as f64)).collect();
    Tensor::from_vec(&[1, 1, plane.height, plane.width], data).expect("plane extents")
}

fn tensor_to_plane<T: Scalar>(t: &Tensor<T>) -> Plane {
    let (h, w) = (t.shape()[2], t.shape()[3]);
    let data = t
        .data()
        .iter()
        .map(|&v| (v.to_f64_val() as f32).clamp(0.0, 1.0))
        .collect();
    Plane { width: w, height: h, data }
}

/// Latent (1, N6, l, l) -> l*l rows of N6-dimensional vectors.
fn latent_to_rows<T: Scalar>(latent: &Tensor<T>, samples: &mut LatentSamples) {
    let (n6, l) = (latent.shape()[1], latent.shape()[2]);
    let mut row = vec![0.0f64; n6];
    for r in 0..l {
        for c in 0..l {
            for (ch, slot) in row.iter_mut().enumerate() {
                *slot = latent.at4(0, ch, r, c).to_f64_val();
            }
            samples.push_row(&row);
        }
    }
}

fn rows_to_maps(samples: &LatentSamples, first_row: usize, n6: usize, l: usize) -> Vec<Grid> {
    let mut maps = vec![Grid::zeros(l, l); n6];
    for r in 0..l {
        for c in 0..l {
            let row = samples.row(first_row + r * l + c);
            for (ch, map) in maps.iter_mut().enumerate() {
                map.set(r, c, row[ch]);
            }
        }
    }
    maps
}

fn maps_to_latent<T: Scalar>(maps: &[Grid]) -> Tensor<T> {
    let (n6, l) = (maps.len(), maps[0].rows);
    let mut t = Tensor::zeros(&[1, n6, l, l]);
    for (ch, map) in maps.iter().enumerate() {
        for r in 0..l {
            for c in 0..l {
                t.set4(0, ch, r, c, T::from_f64(map.at(r, c)));
            }
        }
    }
    t
}

struct PlaneBudget {
    per_patch: Vec<RateTarget>,
}

fn plan_budgets(
    rate: RateTarget,
    pixel_count: usize,
    n_patches: usize,
    n6: usize,
) -> Result<[PlaneBudget; 3]> {
    match rate {
        RateTarget::Lossless => Ok([0, 1, 2].map(|_| PlaneBudget {
            per_patch: vec![RateTarget::Lossless; n_patches],
        })),
        RateTarget::Bits(total) => {
            let header_bits = (HEADER_BYTES * 8) as u64;
            let u_bits = (1 + 2 * n6 * n6) as u64 * 8;
            let min_patch_bits = (PLANE_HEADER_BYTES * 8) as u64;
            let usable = total.checked_sub(header_bits).ok_or_else(|| {
                Error::RateTooSmall(format!(
                    "{total} bits cannot cover the {HEADER_BYTES}-byte container header \
                     ({:.4} bpp equivalent)",
                    total as f64 / pixel_count as f64
                ))
            })?;
            let budgets: Vec<PlaneBudget> = PLANE_WEIGHTS
                .iter()
                .enumerate()
                .map(|(idx, &w)| {
                    let plane_bits = usable * w / 8;
                    let payload = plane_bits.checked_sub(u_bits).ok_or_else(|| {
                        Error::RateTooSmall(format!(
                            "plane {idx}: {plane_bits} bits cannot cover {u_bits} bits of \
                             rotation-matrix side information"
                        ))
                    })?;
                    let per_patch = payload / n_patches as u64;
                    if per_patch < min_patch_bits {
                        return Err(Error::RateTooSmall(format!(
                            "plane {idx}: {per_patch} bits per patch is below the \
                             {min_patch_bits}-bit stream header"
                        )));
                    }
                    Ok(PlaneBudget {
                        per_patch: vec![RateTarget::Bits(per_patch); n_patches],
                    })
                })
                .collect::<Result<_>>()?;
            Ok(budgets.try_into().ok().expect("three planes"))
        }
    }
}

/// Encode one color plane: run every patch through the network, compute
/// the plane's rotation from all patch latents, rotate with the
/// dequantized matrix (so encoder and decoder agree exactly), then tile,
/// quantize, and entropy-code each patch.
fn encode_one_plane<T: Scalar>(
    params: &CaeParams<T>,
    grid: &PatchGrid,
    budget: &PlaneBudget,
    precision_bits: u8,
    out: &mut Vec<u8>,
) -> Result<()> {
    let n6 = params.arch.latent_channels();
    let l = params.arch.latent_extent();

    let latents: Vec<Tensor<T>> = grid
        .patches
        .par_iter()
        .map(|p| cae_encode(params, &plane_to_tensor::<T>(p)))
        .collect::<Result<_>>()?;

    let mut samples = LatentSamples::new(n6);
    for latent in &latents {
        latent_to_rows(latent, &mut samples);
    }
    let cov = compute_covariance(&samples)?;
    let rot = eigendecompose(&cov)?;
    let quantized_u = quantize_u(&rot.u, U_QUANT_BITS)?;
    let u_hat = dequantize_u(&quantized_u);
    let rotated = rotate(&samples, &u_hat)?;

    out.extend_from_slice(&quantized_u.to_bytes());
    let rows_per_patch = l * l;
    let streams: Vec<Vec<u8>> = (0..grid.patches.len())
        .into_par_iter()
        .map(|i| {
            let maps = rows_to_maps(&rotated, i * rows_per_patch, n6, l);
            let tiled = tile_vertical_scan(&maps)?;
            let plane = quantize(&tiled, precision_bits)?;
            encode_plane(&plane, budget.per_patch[i])
        })
        .collect::<Result<_>>()?;
    for s in streams {
        out.extend_from_slice(&s);
    }
    Ok(())
}

/// Encode an RGB raster into a self-contained container. Deterministic for
/// fixed inputs: identical image, parameters, and target give identical
/// bytes.
pub fn encode_image<T: Scalar>(
    image: &RgbImage,
    params: &CaeParams<T>,
    rate: RateTarget,
) -> Result<EncodedImage> {
    params.arch.validate()?;
    if image.width == 0 || image.height == 0 {
        return Err(Error::invalid("encode_image", "empty image"));
    }
    if image.width > u16::MAX as usize || image.height > u16::MAX as usize {
        return Err(Error::invalid(
            "encode_image",
            format!("{}x{} exceeds the u16 header fields", image.width, image.height),
        ));
    }
    let patch_size = params.arch.patch_size;
    let n6 = params.arch.latent_channels();
    let planar = rgb_to_ycbcr(image);
    let grids = [
        split_patches(&planar.y, patch_size)?,
        split_patches(&planar.cb, patch_size)?,
        split_patches(&planar.cr, patch_size)?,
    ];
    let n_patches = grids[0].patches.len();
    let budgets = plan_budgets(rate, image.width * image.height, n_patches, n6)?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    bytes.extend_from_slice(&(image.width as u16).to_le_bytes());
    bytes.extend_from_slice(&(image.height as u16).to_le_bytes());
    bytes.extend_from_slice(&(patch_size as u16).to_le_bytes());
    bytes.push(DEFAULT_PRECISION_BITS);
    bytes.push(n6 as u8);
    bytes.push(3);
    bytes.extend_from_slice(&params.model_id().to_le_bytes());

    for (grid, budget) in grids.iter().zip(budgets.iter()) {
        encode_one_plane(params, grid, budget, DEFAULT_PRECISION_BITS, &mut bytes)?;
    }
    Ok(EncodedImage {
        bytes,
        width: image.width,
        height: image.height,
    })
}

fn decode_one_plane<T: Scalar>(
    params: &CaeParams<T>,
    bytes: &[u8],
    pos: &mut usize,
    width: usize,
    height: usize,
) -> Result<Plane> {
    let n6 = params.arch.latent_channels();
    let l = params.arch.latent_extent();
    let patch_size = params.arch.patch_size;
    let grid_cols = width.div_ceil(patch_size);
    let grid_rows = height.div_ceil(patch_size);
    let n_patches = grid_cols * grid_rows;

    let (quantized_u, consumed) = QuantizedMatrix::from_bytes(&bytes[*pos..], n6)?;
    *pos += consumed;
    let u_hat = dequantize_u(&quantized_u);

    let (tile_rows, tile_cols) = tile_grid_shape(n6);
    let expected = (tile_rows * l, tile_cols * l);
    let mut coded = Vec::with_capacity(n_patches);
    for _ in 0..n_patches {
        let (plane, consumed) = decode_plane(&bytes[*pos..], expected)?;
        *pos += consumed;
        coded.push(plane);
    }

    let patches: Vec<Plane> = coded
        .into_par_iter()
        .map(|qp| -> Result<Plane> {
            let grid = dequantize(&qp);
            let maps = untile_vertical_scan(&grid, n6, l, l)?;
            let mut rows = LatentSamples::new(n6);
            let mut row = vec![0.0f64; n6];
            for r in 0..l {
                for c in 0..l {
                    for (ch, slot) in row.iter_mut().enumerate() {
                        *slot = maps[ch].at(r, c);
                    }
                    rows.push_row(&row);
                }
            }
            let restored = inverse_rotate(&rows, &u_hat)?;
            let maps = rows_to_maps_from(&restored, n6, l);
            let latent = maps_to_latent::<T>(&maps);
            let recon = cae_decode(params, &latent)?;
            Ok(tensor_to_plane(&recon))
        })
        .collect::<Result<_>>()?;

    let grid = PatchGrid {
        patches,
        patch_size,
        grid_rows,
        grid_cols,
        padded_width: grid_cols * patch_size,
        padded_height: grid_rows * patch_size,
        original_width: width,
        original_height: height,
    };
    merge_patches(&grid)
}

fn rows_to_maps_from(samples: &LatentSamples, n6: usize, l: usize) -> Vec<Grid> {
    let mut maps = vec![Grid::zeros(l, l); n6];
    for r in 0..l {
        for c in 0..l {
            let row = samples.row(r * l + c);
            for (ch, map) in maps.iter_mut().enumerate() {
                map.set(r, c, row[ch]);
            }
        }
    }
    maps
}

/// Decode a container back to an RGB raster. Needs the checkpoint the
/// stream references; a checkpoint mismatch is reported, not fatal.
pub fn decode_image<T: Scalar>(
    bytes: &[u8],
    params: &CaeParams<T>,
) -> Result<(RgbImage, DecodeReport)> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::CorruptStream {
            section: "container header",
            message: format!("{} bytes are too short", bytes.len()),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::CorruptStream {
            section: "container header",
            message: "bad magic (expected CAEC)".into(),
        });
    }
    let version = bytes[4];
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let width = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let height = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
    let patch_size = u16::from_le_bytes([bytes[9], bytes[10]]) as usize;
    let precision_bits = bytes[11];
    let n6 = bytes[12] as usize;
    let plane_count = bytes[13];
    let model_id = u64::from_le_bytes(bytes[14..22].try_into().unwrap());

    if width == 0 || height == 0 || precision_bits == 0 {
        return Err(Error::CorruptStream {
            section: "container header",
            message: "zero extent or precision".into(),
        });
    }
    if plane_count != 3 {
        return Err(Error::CorruptStream {
            section: "container header",
            message: format!("unsupported plane count {plane_count}"),
        });
    }
    if params.arch.patch_size != patch_size || params.arch.latent_channels() != n6 {
        return Err(Error::invalid(
            "decode_image",
            format!(
                "checkpoint geometry (patch {}, N6 {}) does not match container (patch {patch_size}, N6 {n6})",
                params.arch.patch_size,
                params.arch.latent_channels()
            ),
        ));
    }
    let report = DecodeReport {
        model_id_mismatch: params.model_id() != model_id,
    };

    let mut pos = HEADER_BYTES;
    let y = decode_one_plane(params, bytes, &mut pos, width, height)?;
    let cb = decode_one_plane(params, bytes, &mut pos, width, height)?;
    let cr = decode_one_plane(params, bytes, &mut pos, width, height)?;
    let planar = PlanarImage { y, cb, cr };
    Ok((ycbcr_to_rgb(&planar), report))
}
