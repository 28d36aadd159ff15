//! Bjontegaard delta rate between two RD curves.
//!
//! Each curve is fitted with a cubic polynomial of log10(bpp) as a
//! function of PSNR (centered for conditioning); the fitted difference is
//! integrated in closed form over the overlapping PSNR interval and
//! mapped back through 10^x. Negative results mean the test curve saves
//! rate against the anchor at equal quality.

use super::RdCurve;
use crate::error::{Error, Result};

/// Cubic fit of log10(bpp) against (psnr - center).
#[derive(Debug, Clone)]
pub(crate) struct CubicFit {
    center: f64,
    coeffs: [f64; 4],
}

impl CubicFit {
    #[cfg(test)]
    pub(crate) fn eval(&self, psnr: f64) -> f64 {
        let x = psnr - self.center;
        self.coeffs[0] + x * (self.coeffs[1] + x * (self.coeffs[2] + x * self.coeffs[3]))
    }

    /// Definite integral over [lo, hi] in PSNR coordinates.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |p: f64| {
            let x = p - self.center;
            x * (self.coeffs[0]
                + x * (self.coeffs[1] / 2.0 + x * (self.coeffs[2] / 3.0 + x * self.coeffs[3] / 4.0)))
        };
        anti(hi) - anti(lo)
    }
}

/// Solve a 4x4 linear system by Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let mut pivot = col;
        for row in (col + 1)..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::invalid(
                "bd_rate",
                "degenerate PSNR values; cubic fit is singular",
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in (row + 1)..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Least-squares cubic of log10(bpp) on centered PSNR (interpolating for
/// exactly four points).
pub(crate) fn fit_log_rate(curve: &RdCurve) -> Result<CubicFit> {
    let n = curve.points.len();
    let center = curve.points.iter().map(|p| p.psnr_db).sum::<f64>() / n as f64;
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for p in &curve.points {
        let x = p.psnr_db - center;
        let y = p.bpp.log10();
        let basis = [1.0, x, x * x, x * x * x];
        for r in 0..4 {
            for c in 0..4 {
                ata[r][c] += basis[r] * basis[c];
            }
            atb[r] += basis[r] * y;
        }
    }
    Ok(CubicFit {
        center,
        coeffs: solve4(ata, atb)?,
    })
}

pub(crate) fn overlap(anchor: &RdCurve, test: &RdCurve) -> Result<(f64, f64)> {
    let span = |c: &RdCurve| {
        let lo = c.points.iter().map(|p| p.psnr_db).fold(f64::INFINITY, f64::min);
        let hi = c.points.iter().map(|p| p.psnr_db).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (a_lo, a_hi) = span(anchor);
    let (t_lo, t_hi) = span(test);
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if !(hi > lo) {
        return Err(Error::invalid(
            "bd_rate",
            format!("PSNR ranges do not overlap ([{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}])"),
        ));
    }
    Ok((lo, hi))
}

/// Average percent bitrate difference of `test` against `anchor` at equal
/// PSNR. Negative percentages are bitrate savings.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (lo, hi) = overlap(anchor, test)?;
    let fit_a = fit_log_rate(anchor)?;
    let fit_t = fit_log_rate(test)?;
    let avg_diff = (fit_t.integral(lo, hi) - fit_a.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg_diff) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RdPoint;

    fn curve_from(label: &str, pts: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(
            label,
            pts.iter()
                .map(|&(bpp, psnr)| RdPoint { bpp, psnr_db: psnr, msssim: 0.9 })
                .collect(),
        )
        .unwrap()
    }

    fn sample_curve() -> RdCurve {
        curve_from(
            "anchor",
            &[(0.12, 26.0), (0.5, 31.5), (1.0, 35.0), (2.4, 40.0)],
        )
    }

    #[test]
    fn identical_curves_give_zero() {
        let c = sample_curve();
        let v = bd_rate(&c, &c).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn doubled_rate_gives_plus_hundred_percent() {
        let anchor = sample_curve();
        let doubled = curve_from(
            "double",
            &[(0.24, 26.0), (1.0, 31.5), (2.0, 35.0), (4.8, 40.0)],
        );
        let v = bd_rate(&anchor, &doubled).unwrap();
        assert!((v - 100.0).abs() <= 0.01, "{v}");
    }

    #[test]
    fn closed_form_matches_trapezoid_quadrature() {
        // Two synthetic curves with distinct known cubic log-rate shapes.
        let anchor = curve_from(
            "a",
            &[(0.1, 25.0), (0.42, 30.0), (1.1, 34.5), (2.3, 39.5)],
        );
        let test = curve_from(
            "t",
            &[(0.09, 25.5), (0.36, 30.5), (0.9, 34.0), (2.0, 40.5)],
        );
        let got = bd_rate(&anchor, &test).unwrap();

        let (lo, hi) = overlap(&anchor, &test).unwrap();
        let fa = fit_log_rate(&anchor).unwrap();
        let ft = fit_log_rate(&test).unwrap();
        let steps = 200_000;
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let p = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += w * (ft.eval(p) - fa.eval(p));
        }
        let avg = acc * h / (hi - lo);
        let oracle = (10f64.powf(avg) - 1.0) * 100.0;
        let rel = (got - oracle).abs() / oracle.abs().max(1e-9);
        assert!(rel <= 1e-3, "closed form {got} vs quadrature {oracle}");
    }

    #[test]
    fn approximately_antisymmetric() {
        let a = sample_curve();
        let b = curve_from(
            "b",
            &[(0.1, 25.5), (0.45, 31.0), (0.95, 35.5), (2.2, 40.5)],
        );
        let ab = bd_rate(&a, &b).unwrap();
        let ba = bd_rate(&b, &a).unwrap();
        let product = (1.0 + ab / 100.0) * (1.0 + ba / 100.0);
        assert!((product - 1.0).abs() <= 0.01, "{ab} vs {ba} -> {product}");
    }

    #[test]
    fn disjoint_psnr_ranges_error() {
        let a = curve_from("a", &[(0.1, 20.0), (0.2, 21.0), (0.3, 22.0), (0.4, 23.0)]);
        let b = curve_from("b", &[(0.1, 30.0), (0.2, 31.0), (0.3, 32.0), (0.4, 33.0)]);
        assert!(bd_rate(&a, &b).is_err());
    }
}
