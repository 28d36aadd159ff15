//! Embedded bitplane coding of integer coefficient grids.
//!
//! Coefficients are split into sign and magnitude and coded most
//! significant bitplane first. Within a plane, cells are visited in raster
//! order: a cell that is not yet significant codes a significance bit
//! under one of two contexts (chosen by whether any 4-neighbor is already
//! significant) and, on becoming significant, its sign under a dedicated
//! context; an already-significant cell codes a refinement bit. Context
//! state persists across planes, but each plane's arithmetic codeword is
//! flushed into its own length-prefixed segment, so the stream can be cut
//! at any plane boundary and the cut is detectable.
//!
//! Wire layout (little-endian): u16 rows, u16 cols, u8 total bitplanes,
//! u8 flags (bits 0-4 carry the quantizer precision B, bit 5 marks a
//! rate-truncated stream), u32 payload length, then per included plane a
//! u32 segment length and the segment bytes.
//!
//! A decoder that receives only a prefix fills the missing planes with
//! zeros and reconstructs significant coefficients at the midpoint of
//! their uncertainty interval (magnitude + 2^(k-1) for k untransmitted
//! planes).

use super::arith::{ArithDecoder, ArithEncoder, BinaryContext};
use super::quant::QuantizedPlane;
use crate::error::{Error, Result};

/// Fixed per-plane header: rows, cols, bitplane count, flags, payload length.
pub const PLANE_HEADER_BYTES: usize = 10;

const MAX_BITPLANES: u8 = 30;
const FLAG_TRUNCATED: u8 = 0x20;
const FLAG_PRECISION_MASK: u8 = 0x1F;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateTarget {
    /// Keep every bitplane (lossless up to the quantizer precision).
    Lossless,
    /// Greedy truncation at bitplane boundaries; never exceeds the budget.
    Bits(u64),
}

#[derive(Default)]
struct Contexts {
    significance: [BinaryContext; 2],
    refinement: BinaryContext,
    sign: BinaryContext,
}

#[inline]
fn any_neighbor_significant(sig: &[bool], rows: usize, cols: usize, r: usize, c: usize) -> bool {
    (r > 0 && sig[(r - 1) * cols + c])
        || (r + 1 < rows && sig[(r + 1) * cols + c])
        || (c > 0 && sig[r * cols + c - 1])
        || (c + 1 < cols && sig[r * cols + c + 1])
}

fn encode_bitplane(
    plane_idx: u8,
    mags: &[u32],
    negs: &[bool],
    sig: &mut [bool],
    ctxs: &mut Contexts,
    rows: usize,
    cols: usize,
) -> Vec<u8> {
    let mut enc = ArithEncoder::new();
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            let bit = (mags[idx] >> plane_idx) & 1 == 1;
            if sig[idx] {
                enc.encode(bit, ctxs.refinement.prob_one());
                ctxs.refinement.update(bit);
            } else {
                let ctx = &mut ctxs.significance
                    [any_neighbor_significant(sig, rows, cols, r, c) as usize];
                enc.encode(bit, ctx.prob_one());
                ctx.update(bit);
                if bit {
                    enc.encode(negs[idx], ctxs.sign.prob_one());
                    ctxs.sign.update(negs[idx]);
                    sig[idx] = true;
                }
            }
        }
    }
    enc.finish()
}

fn decode_bitplane(
    plane_idx: u8,
    segment: &[u8],
    mags: &mut [u32],
    negs: &mut [bool],
    sig: &mut [bool],
    ctxs: &mut Contexts,
    rows: usize,
    cols: usize,
) {
    let mut dec = ArithDecoder::new(segment);
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            if sig[idx] {
                let bit = dec.decode(ctxs.refinement.prob_one());
                ctxs.refinement.update(bit);
                if bit {
                    mags[idx] |= 1 << plane_idx;
                }
            } else {
                let ctx = &mut ctxs.significance
                    [any_neighbor_significant(sig, rows, cols, r, c) as usize];
                let bit = dec.decode(ctx.prob_one());
                ctx.update(bit);
                if bit {
                    let neg = dec.decode(ctxs.sign.prob_one());
                    ctxs.sign.update(neg);
                    mags[idx] = 1 << plane_idx;
                    negs[idx] = neg;
                    sig[idx] = true;
                }
            }
        }
    }
}

/// Encode a quantized plane into an embedded stream, greedily keeping
/// whole bitplanes while they fit the rate target.
pub fn encode_plane(plane: &QuantizedPlane, rate: RateTarget) -> Result<Vec<u8>> {
    if plane.num_bitplanes > MAX_BITPLANES {
        return Err(Error::invalid(
            "encode_plane",
            format!(
                "{} bitplanes exceed the supported {MAX_BITPLANES}",
                plane.num_bitplanes
            ),
        ));
    }
    if plane.rows > u16::MAX as usize || plane.cols > u16::MAX as usize || plane.rows * plane.cols == 0 {
        return Err(Error::invalid(
            "encode_plane",
            format!("grid {}x{} does not fit the format", plane.rows, plane.cols),
        ));
    }
    if plane.precision_bits == 0 || plane.precision_bits > FLAG_PRECISION_MASK {
        return Err(Error::invalid(
            "encode_plane",
            format!("precision {} out of range", plane.precision_bits),
        ));
    }
    if let RateTarget::Bits(budget) = rate {
        if budget < (PLANE_HEADER_BYTES * 8) as u64 {
            return Err(Error::RateTooSmall(format!(
                "{budget} bits cannot cover the {PLANE_HEADER_BYTES}-byte plane header"
            )));
        }
    }

    let cells = plane.rows * plane.cols;
    let mags: Vec<u32> = plane.coefficients.iter().map(|c| c.unsigned_abs()).collect();
    let negs: Vec<bool> = plane.coefficients.iter().map(|&c| c < 0).collect();
    let mut sig = vec![false; cells];
    let mut ctxs = Contexts::default();

    let mut segments: Vec<Vec<u8>> = Vec::with_capacity(plane.num_bitplanes as usize);
    let mut spent_bits = (PLANE_HEADER_BYTES * 8) as u64;
    for p in (0..plane.num_bitplanes).rev() {
        let seg = encode_bitplane(p, &mags, &negs, &mut sig, &mut ctxs, plane.rows, plane.cols);
        let seg_bits = (4 + seg.len()) as u64 * 8;
        if let RateTarget::Bits(budget) = rate {
            if spent_bits + seg_bits > budget {
                break;
            }
        }
        spent_bits += seg_bits;
        segments.push(seg);
    }

    let truncated = segments.len() < plane.num_bitplanes as usize;
    let payload_len: usize = segments.iter().map(|s| 4 + s.len()).sum();
    let mut out = Vec::with_capacity(PLANE_HEADER_BYTES + payload_len);
    out.extend_from_slice(&(plane.rows as u16).to_le_bytes());
    out.extend_from_slice(&(plane.cols as u16).to_le_bytes());
    out.push(plane.num_bitplanes);
    out.push(plane.precision_bits | if truncated { FLAG_TRUNCATED } else { 0 });
    out.extend_from_slice(&(payload_len as u32).to_le_bytes());
    for seg in &segments {
        out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
        out.extend_from_slice(seg);
    }
    Ok(out)
}

/// Decode an embedded stream back to coefficients. `bytes` may be a prefix
/// of the full stream as long as it ends at a plane boundary; missing
/// planes zero-fill and significant coefficients get the midpoint offset.
/// Returns the plane and the number of bytes consumed.
pub fn decode_plane(bytes: &[u8], expected_dims: (usize, usize)) -> Result<(QuantizedPlane, usize)> {
    if bytes.len() < PLANE_HEADER_BYTES {
        return Err(Error::CorruptStream {
            section: "coded plane",
            message: format!("{} bytes are too short for the header", bytes.len()),
        });
    }
    let rows = u16::from_le_bytes([bytes[0], bytes[1]]) as usize;
    let cols = u16::from_le_bytes([bytes[2], bytes[3]]) as usize;
    let num_bitplanes = bytes[4];
    let flags = bytes[5];
    let payload_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    if (rows, cols) != expected_dims {
        return Err(Error::CorruptStream {
            section: "coded plane",
            message: format!(
                "dimensions {rows}x{cols} do not match expected {}x{}",
                expected_dims.0, expected_dims.1
            ),
        });
    }
    if num_bitplanes > MAX_BITPLANES {
        return Err(Error::CorruptStream {
            section: "coded plane",
            message: format!("bitplane count {num_bitplanes} out of range"),
        });
    }
    let precision_bits = flags & FLAG_PRECISION_MASK;
    if precision_bits == 0 {
        return Err(Error::CorruptStream {
            section: "coded plane",
            message: "zero precision in flags".into(),
        });
    }

    let cells = rows * cols;
    let mut mags = vec![0u32; cells];
    let mut negs = vec![false; cells];
    let mut sig = vec![false; cells];
    let mut ctxs = Contexts::default();

    let available = payload_len.min(bytes.len() - PLANE_HEADER_BYTES);
    let payload = &bytes[PLANE_HEADER_BYTES..PLANE_HEADER_BYTES + available];
    let mut pos = 0usize;
    let mut decoded = 0u8;
    while pos < available {
        if decoded >= num_bitplanes {
            return Err(Error::CorruptStream {
                section: "coded plane",
                message: "payload holds more segments than bitplanes".into(),
            });
        }
        if available - pos < 4 {
            return Err(Error::PrematureEnd { section: "coded plane" });
        }
        let seg_len =
            u32::from_le_bytes([payload[pos], payload[pos + 1], payload[pos + 2], payload[pos + 3]])
                as usize;
        pos += 4;
        if available - pos < seg_len {
            return Err(Error::PrematureEnd { section: "coded plane" });
        }
        let plane_idx = num_bitplanes - 1 - decoded;
        decode_bitplane(
            plane_idx,
            &payload[pos..pos + seg_len],
            &mut mags,
            &mut negs,
            &mut sig,
            &mut ctxs,
            rows,
            cols,
        );
        pos += seg_len;
        decoded += 1;
    }

    let untransmitted = num_bitplanes - decoded;
    if untransmitted > 0 {
        let offset = 1u32 << (untransmitted - 1);
        for idx in 0..cells {
            if sig[idx] {
                mags[idx] += offset;
            }
        }
    }
    let coefficients: Vec<i32> = mags
        .iter()
        .zip(negs.iter())
        .map(|(&m, &n)| if n { -(m as i64) as i32 } else { m as i32 })
        .collect();

    let plane = QuantizedPlane {
        rows,
        cols,
        coefficients,
        num_bitplanes,
        precision_bits,
    };
    Ok((plane, PLANE_HEADER_BYTES + pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quant::QuantizedPlane;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_from(rows: usize, cols: usize, coeffs: Vec<i32>) -> QuantizedPlane {
        QuantizedPlane::from_coefficients(rows, cols, coeffs, 12).unwrap()
    }

    #[test]
    fn all_zero_plane_is_header_only() {
        let plane = plane_from(4, 4, vec![0; 16]);
        let bytes = encode_plane(&plane, RateTarget::Lossless).unwrap();
        assert_eq!(bytes.len(), PLANE_HEADER_BYTES);
        let (decoded, consumed) = decode_plane(&bytes, (4, 4)).unwrap();
        assert_eq!(consumed, bytes.len());
        assert_eq!(decoded.coefficients, vec![0; 16]);
    }

    #[test]
    fn lossless_roundtrip_small_cases() {
        for coeffs in [
            vec![5],
            vec![-5],
            vec![1, -1, 0, 7],
            vec![1023, -4096, 0, 0, 13, -2, 99, 100, -101],
        ] {
            let n = coeffs.len();
            let (rows, cols) = if n == 1 { (1, 1) } else if n == 4 { (2, 2) } else { (3, 3) };
            let plane = plane_from(rows, cols, coeffs.clone());
            let bytes = encode_plane(&plane, RateTarget::Lossless).unwrap();
            let (decoded, consumed) = decode_plane(&bytes, (rows, cols)).unwrap();
            assert_eq!(consumed, bytes.len());
            assert_eq!(decoded.coefficients, coeffs);
        }
    }

    #[test]
    fn truncation_after_msb_plane_reconstructs_midpoint() {
        // Value 5 is 101b. Keeping only the most significant plane leaves
        // two unknown planes, so the decoder sees magnitude 4 and adds the
        // 2^(2-1) midpoint offset: reconstruction 6.
        let plane = plane_from(1, 1, vec![5]);
        let full = encode_plane(&plane, RateTarget::Lossless).unwrap();

        // Budget for exactly one segment: header + first segment size.
        let first_seg_len =
            u32::from_le_bytes([full[10], full[11], full[12], full[13]]) as usize;
        let budget = ((PLANE_HEADER_BYTES + 4 + first_seg_len) * 8) as u64;
        let truncated = encode_plane(&plane, RateTarget::Bits(budget)).unwrap();
        let (decoded, _) = decode_plane(&truncated, (1, 1)).unwrap();
        assert_eq!(decoded.coefficients, vec![6]);
    }

    #[test]
    fn truncated_stream_never_exceeds_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coeffs: Vec<i32> = (0..256).map(|_| rng.gen_range(-100_000..100_000)).collect();
        let plane = plane_from(16, 16, coeffs);
        let full = encode_plane(&plane, RateTarget::Lossless).unwrap();
        for budget_bytes in [10usize, 64, 128, 256, full.len()] {
            let bytes = encode_plane(&plane, RateTarget::Bits((budget_bytes * 8) as u64)).unwrap();
            assert!(bytes.len() <= budget_bytes, "{} > {budget_bytes}", bytes.len());
            let (decoded, _) = decode_plane(&bytes, (16, 16)).unwrap();
            assert_eq!(decoded.rows, 16);
        }
    }

    #[test]
    fn rate_below_header_cost_is_an_error() {
        let plane = plane_from(1, 1, vec![1]);
        assert!(matches!(
            encode_plane(&plane, RateTarget::Bits(79)),
            Err(Error::RateTooSmall(_))
        ));
    }

    #[test]
    fn corrupt_header_is_rejected() {
        let plane = plane_from(2, 2, vec![1, 2, 3, 4]);
        let bytes = encode_plane(&plane, RateTarget::Lossless).unwrap();
        assert!(decode_plane(&bytes[..6], (2, 2)).is_err());
        assert!(decode_plane(&bytes, (2, 3)).is_err());

        let mut bad = bytes.clone();
        bad[4] = 31; // absurd bitplane count
        assert!(decode_plane(&bad, (2, 2)).is_err());
    }

    #[test]
    fn mid_segment_cut_is_a_premature_end() {
        let plane = plane_from(2, 2, vec![100, -200, 300, -400]);
        let bytes = encode_plane(&plane, RateTarget::Lossless).unwrap();
        let cut = bytes.len() - 1;
        match decode_plane(&bytes[..cut], (2, 2)) {
            Err(Error::PrematureEnd { .. }) => {}
            other => panic!("expected premature end, got {other:?}"),
        }
    }

    #[test]
    fn prefix_at_plane_boundary_decodes_and_embeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs: Vec<i32> = (0..64).map(|_| rng.gen_range(-5000..5000)).collect();
        let plane = plane_from(8, 8, coeffs.clone());
        let full = encode_plane(&plane, RateTarget::Lossless).unwrap();
        let n = plane.num_bitplanes;

        // Walk the segment boundaries and decode every prefix.
        let mut pos = PLANE_HEADER_BYTES;
        for t in 1..=n {
            let seg_len = u32::from_le_bytes([
                full[pos],
                full[pos + 1],
                full[pos + 2],
                full[pos + 3],
            ]) as usize;
            pos += 4 + seg_len;
            let (decoded, _) = decode_plane(&full[..pos], (8, 8)).unwrap();
            let k = n - t;
            for (i, &v) in coeffs.iter().enumerate() {
                let mag = v.unsigned_abs();
                let transmitted = (mag >> k) << k;
                let expected_mag = if transmitted > 0 && k > 0 {
                    transmitted + (1 << (k - 1))
                } else {
                    transmitted
                };
                let expected = if v < 0 { -(expected_mag as i64) } else { expected_mag as i64 };
                assert_eq!(
                    decoded.coefficients[i] as i64, expected,
                    "prefix t={t}, coeff {i} = {v}"
                );
            }
        }
    }
}
