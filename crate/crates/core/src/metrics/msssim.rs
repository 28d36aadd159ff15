//! Multi-scale SSIM with the standard five-scale weights.
//!
//! 11x11 Gaussian window (sigma 1.5), stabilizers C1 = (0.01 peak)^2 and
//! C2 = (0.03 peak)^2, scale weights (0.0448, 0.2856, 0.3001, 0.2363,
//! 0.1333). Contrast-structure terms accumulate over the first four
//! scales; the full SSIM (with luminance) enters at the coarsest scale.
//! Scales halve by 2x2 mean pooling, so inputs need extents of at least
//! 176 for the 11-tap window to fit at scale five.

use crate::color::Plane;
use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const SCALES: usize = 5;
const WEIGHTS: [f64; SCALES] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const MIN_EXTENT: usize = 176;

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let center = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, slot) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *slot = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *slot;
    }
    for slot in &mut w {
        *slot /= sum;
    }
    w
}

struct F64Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl F64Plane {
    fn from_plane(p: &Plane) -> Self {
        F64Plane {
            width: p.width,
            height: p.height,
            data: p.data.iter().map(|&v| v as f64).collect(),
        }
    }

    fn downsample_2x(&self) -> Self {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let base = 2 * r * self.width + 2 * c;
                let s = self.data[base]
                    + self.data[base + 1]
                    + self.data[base + self.width]
                    + self.data[base + self.width + 1];
                data.push(s * 0.25);
            }
        }
        F64Plane { width: w, height: h, data }
    }

    /// Separable Gaussian filter, valid region only.
    fn window_filter(&self, taps: &[f64; WINDOW]) -> F64Plane {
        let out_w = self.width - WINDOW + 1;
        let mut horiz = Vec::with_capacity(self.height * out_w);
        for r in 0..self.height {
            let row = &self.data[r * self.width..(r + 1) * self.width];
            for c in 0..out_w {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    acc += t * row[c + k];
                }
                horiz.push(acc);
            }
        }
        let out_h = self.height - WINDOW + 1;
        let mut data = Vec::with_capacity(out_h * out_w);
        for r in 0..out_h {
            for c in 0..out_w {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    acc += t * horiz[(r + k) * out_w + c];
                }
                data.push(acc);
            }
        }
        F64Plane { width: out_w, height: out_h, data }
    }

    fn multiply(&self, other: &F64Plane) -> F64Plane {
        F64Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| a * b)
                .collect(),
        }
    }
}

/// Mean luminance term and mean contrast-structure term at one scale.
fn ssim_terms(a: &F64Plane, b: &F64Plane, taps: &[f64; WINDOW], peak: f64) -> (f64, f64) {
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);

    let mu_a = a.window_filter(taps);
    let mu_b = b.window_filter(taps);
    let aa = a.multiply(a).window_filter(taps);
    let bb = b.multiply(b).window_filter(taps);
    let ab = a.multiply(b).window_filter(taps);

    let n = mu_a.data.len();
    let mut lum = 0.0;
    let mut cs = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let var_a = aa.data[i] - ma * ma;
        let var_b = bb.data[i] - mb * mb;
        let cov = ab.data[i] - ma * mb;
        lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += (2.0 * cov + c2) / (var_a + var_b + c2);
    }
    (lum / n as f64, cs / n as f64)
}

/// Five-scale MS-SSIM on planes in [0, peak = 1].
pub fn ms_ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::shape(
            "ms_ssim",
            format!("{}x{}", reference.width, reference.height),
            format!("{}x{}", test.width, test.height),
        ));
    }
    if reference.width < MIN_EXTENT || reference.height < MIN_EXTENT {
        return Err(Error::invalid(
            "ms_ssim",
            format!(
                "extents {}x{} below the {MIN_EXTENT}-pixel minimum for {SCALES} scales",
                reference.width, reference.height
            ),
        ));
    }
    let taps = gaussian_window();
    let mut a = F64Plane::from_plane(reference);
    let mut b = F64Plane::from_plane(test);
    let mut value = 1.0f64;
    for scale in 0..SCALES {
        let (lum, cs) = ssim_terms(&a, &b, &taps, 1.0);
        let cs = cs.clamp(0.0, 1.0);
        if scale + 1 < SCALES {
            value *= cs.powf(WEIGHTS[scale]);
            a = a.downsample_2x();
            b = b.downsample_2x();
        } else {
            let ssim = (lum * cs).clamp(0.0, 1.0);
            value *= ssim.powf(WEIGHTS[scale]);
        }
    }
    Ok(value.clamp(0.0, 1.0))
}
