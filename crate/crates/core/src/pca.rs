//! Per-image PCA over latent vectors: uncentered covariance, a cyclic
//! Jacobi eigensolver, rotation by the eigenvector basis, and the
//! quantized side-information matrix the decoder needs.
//!
//! The second-moment matrix is computed without mean subtraction, so the
//! decoder needs no mean vector. Eigenvectors are stacked in columns of U
//! ordered by descending eigenvalue; ties keep the original dimension
//! order and each column is sign-fixed so its largest-magnitude entry is
//! non-negative, making the factorization deterministic. Both the encoder
//! and the decoder rotate with the dequantized matrix so the two sides
//! agree exactly.

use crate::error::{Error, Result};

/// Row-major m x n matrix of latent samples, one vector per row.
#[derive(Debug, Clone)]
pub struct LatentSamples {
    pub dims: usize,
    pub data: Vec<f64>,
}

impl LatentSamples {
    pub fn new(dims: usize) -> Self {
        LatentSamples { dims, data: Vec::new() }
    }

    pub fn from_rows(dims: usize, data: Vec<f64>) -> Result<Self> {
        if dims == 0 || data.len() % dims != 0 {
            return Err(Error::invalid(
                "LatentSamples",
                format!("{} values do not form rows of {dims}", data.len()),
            ));
        }
        Ok(LatentSamples { dims, data })
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dims);
        self.data.extend_from_slice(row);
    }

    pub fn row_count(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn off_diagonal_frobenius(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.n {
            for c in 0..self.n {
                if r != c {
                    s += self.at(r, c) * self.at(r, c);
                }
            }
        }
        s.sqrt()
    }
}

/// Orthogonal eigenvector matrix with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct RotationMatrix {
    /// Eigenvectors in columns; column j pairs with `eigenvalues[j]`.
    pub u: SquareMatrix,
    pub eigenvalues: Vec<f64>,
}

/// Uncentered second-moment matrix (1/m) sum of y yT over sample rows.
pub fn compute_covariance(samples: &LatentSamples) -> Result<SquareMatrix> {
    let m = samples.row_count();
    if m == 0 {
        return Err(Error::invalid("compute_covariance", "no samples (m = 0)"));
    }
    let n = samples.dims;
    let mut cov = SquareMatrix::zeros(n);
    for i in 0..m {
        let row = samples.row(i);
        for r in 0..n {
            let vr = row[r];
            if vr == 0.0 {
                continue;
            }
            for c in r..n {
                cov.data[r * n + c] += vr * row[c];
            }
        }
    }
    let inv_m = 1.0 / m as f64;
    for r in 0..n {
        for c in r..n {
            let v = cov.data[r * n + c] * inv_m;
            cov.data[r * n + c] = v;
            cov.data[c * n + r] = v;
        }
    }
    Ok(cov)
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations on a symmetric matrix. Iterates until the
/// off-diagonal Frobenius norm drops below 1e-12 times the matrix norm.
pub fn eigendecompose(sigma: &SquareMatrix) -> Result<RotationMatrix> {
    let n = sigma.n;
    // Symmetry gate; asymmetric input means the caller fed something wrong.
    let scale = sigma.frobenius().max(1.0);
    for r in 0..n {
        for c in (r + 1)..n {
            if (sigma.at(r, c) - sigma.at(c, r)).abs() > 1e-9 * scale {
                return Err(Error::invalid(
                    "eigendecompose",
                    format!("matrix is not symmetric at ({r}, {c})"),
                ));
            }
        }
    }

    let mut a = sigma.clone();
    // Force exact symmetry so rotations stay consistent.
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (a.at(r, c) + a.at(c, r));
            a.set(r, c, v);
            a.set(c, r, v);
        }
    }
    let mut v = SquareMatrix::identity(n);
    let threshold = 1e-12 * sigma.frobenius();

    for _ in 0..MAX_SWEEPS {
        if a.off_diagonal_frobenius() <= threshold {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.at(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.at(p, p);
                let aqq = a.at(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.at(k, p);
                    let akq = a.at(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.at(p, k);
                    let aqk = a.at(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    // Descending eigenvalue order; stable sort keeps original dimension
    // order for ties.
    let mut order: Vec<usize> = (0..n).collect();
    let eig: Vec<f64> = (0..n).map(|i| a.at(i, i)).collect();
    order.sort_by(|&i, &j| eig[j].partial_cmp(&eig[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = SquareMatrix::zeros(n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(eig[src]);
        // Sign fix: first entry of largest magnitude made non-negative.
        let mut max_abs = 0.0;
        let mut max_row = 0;
        for r in 0..n {
            let val = v.at(r, src).abs();
            if val > max_abs {
                max_abs = val;
                max_row = r;
            }
        }
        let flip = if v.at(max_row, src) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            u.set(r, dst, flip * v.at(r, src));
        }
    }
    Ok(RotationMatrix { u, eigenvalues })
}

/// y_rot = U^T y, applied to every sample row.
pub fn rotate(samples: &LatentSamples, u: &SquareMatrix) -> Result<LatentSamples> {
    apply(samples, u, true)
}

/// y = U y_rot, the inverse of [`rotate`] for orthonormal U.
pub fn inverse_rotate(samples: &LatentSamples, u: &SquareMatrix) -> Result<LatentSamples> {
    apply(samples, u, false)
}

fn apply(samples: &LatentSamples, u: &SquareMatrix, transpose: bool) -> Result<LatentSamples> {
    let n = samples.dims;
    if u.n != n {
        return Err(Error::shape(
            "pca::rotate",
            format!("{n}x{n} matrix"),
            format!("{0}x{0}", u.n),
        ));
    }
    let m = samples.row_count();
    let mut out = Vec::with_capacity(samples.data.len());
    let mut tmp = vec![0.0; n];
    for i in 0..m {
        let row = samples.row(i);
        for (j, slot) in tmp.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &rv) in row.iter().enumerate() {
                let uv = if transpose { u.at(k, j) } else { u.at(j, k) };
                acc += uv * rv;
            }
            *slot = acc;
        }
        out.extend_from_slice(&tmp);
    }
    LatentSamples::from_rows(n, out)
}

/// Uniform 16-bit quantization of U on the mid-tread grid code/32767, so
/// 0 and +-1 are exactly representable (orthonormal entries never leave
/// [-1, 1]). The wire block is one `bits` byte then n^2 codes, row-major,
/// little-endian two's complement.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    pub n: usize,
    pub bits: u8,
    pub codes: Vec<i32>,
}

pub const U_QUANT_BITS: u8 = 16;

fn quant_scale(bits: u8) -> f64 {
    ((1u64 << (bits - 1)) - 1) as f64
}

pub fn quantize_u(u: &SquareMatrix, bits: u8) -> Result<QuantizedMatrix> {
    if !(2..=31).contains(&bits) {
        return Err(Error::invalid("quantize_u", format!("bits must be in 2..=31, got {bits}")));
    }
    let scale = quant_scale(bits);
    let codes = u
        .data
        .iter()
        .map(|&v| (v * scale).round() as i32)
        .collect();
    Ok(QuantizedMatrix { n: u.n, bits, codes })
}

pub fn dequantize_u(q: &QuantizedMatrix) -> SquareMatrix {
    let scale = quant_scale(q.bits);
    SquareMatrix {
        n: q.n,
        data: q.codes.iter().map(|&c| c as f64 / scale).collect(),
    }
}

impl QuantizedMatrix {
    /// Side-information cost in bits (bits-per-entry field + codes).
    pub fn side_info_bits(&self) -> usize {
        8 + self.n * self.n * self.bits as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 2 * self.codes.len());
        out.push(self.bits);
        for &c in &self.codes {
            out.extend_from_slice(&(c as i16 as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], n: usize) -> Result<(Self, usize)> {
        if bytes.is_empty() {
            return Err(Error::CorruptStream {
                section: "rotation matrix",
                message: "empty block".into(),
            });
        }
        let bits = bytes[0];
        if bits != U_QUANT_BITS {
            return Err(Error::CorruptStream {
                section: "rotation matrix",
                message: format!("unsupported bits-per-entry {bits}"),
            });
        }
        let need = 1 + 2 * n * n;
        if bytes.len() < need {
            return Err(Error::CorruptStream {
                section: "rotation matrix",
                message: format!("need {need} bytes, have {}", bytes.len()),
            });
        }
        let mut codes = Vec::with_capacity(n * n);
        for i in 0..n * n {
            let lo = bytes[1 + 2 * i];
            let hi = bytes[2 + 2 * i];
            codes.push(i16::from_le_bytes([lo, hi]) as i32);
        }
        Ok((QuantizedMatrix { n, bits, codes }, need))
    }
}
