//! Planar images and full-range BT.601 color conversion.

use crate::error::{Error, Result};

/// One image plane with values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                "Plane::from_vec",
                format!("{} values", width * height),
                format!("{}", data.len()),
            ));
        }
        Ok(Plane { width, height, data })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }
}

/// Interleaved-free RGB image: three planes of equal extent in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f32>,
    pub g: Vec<f32>,
    pub b: Vec<f32>,
}

/// Y, Cb, Cr planes sharing extents, values in [0, 1].
#[derive(Debug, Clone)]
pub struct PlanarImage {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl PlanarImage {
    pub fn width(&self) -> usize {
        self.y.width
    }
    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn plane(&self, idx: usize) -> &Plane {
        match idx {
            0 => &self.y,
            1 => &self.cb,
            _ => &self.cr,
        }
    }
}

#[inline]
fn clamp01(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}

/// Full-range BT.601: Y = 0.299 R + 0.587 G + 0.114 B, chroma offset 0.5.
pub fn rgb_to_ycbcr(rgb: &RgbImage) -> PlanarImage {
    let n = rgb.width * rgb.height;
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for i in 0..n {
        let (r, g, b) = (rgb.r[i] as f64, rgb.g[i] as f64, rgb.b[i] as f64);
        y.push(clamp01((0.299 * r + 0.587 * g + 0.114 * b) as f32));
        cb.push(clamp01((0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b) as f32));
        cr.push(clamp01((0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b) as f32));
    }
    PlanarImage {
        y: Plane { width: rgb.width, height: rgb.height, data: y },
        cb: Plane { width: rgb.width, height: rgb.height, data: cb },
        cr: Plane { width: rgb.width, height: rgb.height, data: cr },
    }
}

pub fn ycbcr_to_rgb(img: &PlanarImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let mut r = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let y = img.y.data[i] as f64;
        let cb = img.cb.data[i] as f64 - 0.5;
        let cr = img.cr.data[i] as f64 - 0.5;
        r.push(clamp01((y + 1.402 * cr) as f32));
        g.push(clamp01((y - 0.344136 * cb - 0.714136 * cr) as f32));
        b.push(clamp01((y + 1.772 * cb) as f32));
    }
    RgbImage { width: w, height: h, r, g, b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_pixel(r: f32, g: f32, b: f32) -> RgbImage {
        RgbImage {
            width: 1,
            height: 1,
            r: vec![r],
            g: vec![g],
            b: vec![b],
        }
    }

    #[test]
    fn white_maps_to_unit_luma_and_neutral_chroma() {
        let p = rgb_to_ycbcr(&one_pixel(1.0, 1.0, 1.0));
        assert!((p.y.data[0] - 1.0).abs() < 1e-6);
        assert!((p.cb.data[0] - 0.5).abs() < 1e-6);
        assert!((p.cr.data[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn black_maps_to_zero_luma_and_neutral_chroma() {
        let p = rgb_to_ycbcr(&one_pixel(0.0, 0.0, 0.0));
        assert!(p.y.data[0].abs() < 1e-6);
        assert!((p.cb.data[0] - 0.5).abs() < 1e-6);
        assert!((p.cr.data[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn pure_red_matches_the_matrix() {
        let p = rgb_to_ycbcr(&one_pixel(1.0, 0.0, 0.0));
        assert!((p.y.data[0] - 0.299).abs() < 1e-6);
        assert!((p.cb.data[0] - 0.331264).abs() < 1e-6);
        assert!((p.cr.data[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn roundtrip_error_within_two_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let img = RgbImage {
            width: n,
            height: 1,
            r: (0..n).map(|_| rng.gen::<f32>()).collect(),
            g: (0..n).map(|_| rng.gen::<f32>()).collect(),
            b: (0..n).map(|_| rng.gen::<f32>()).collect(),
        };
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img));
        let tol = 2.0 / 255.0;
        for i in 0..n {
            assert!((img.r[i] - back.r[i]).abs() <= tol);
            assert!((img.g[i] - back.g[i]).abs() <= tol);
            assert!((img.b[i] - back.b[i]).abs() <= tol);
        }
    }
}
