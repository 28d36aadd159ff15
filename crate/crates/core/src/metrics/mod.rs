//! Quality metrics and rate-distortion tooling: PSNR, weighted PSNR,
//! MS-SSIM, RD curves with CSV I/O, and BD-rate.

mod bdrate;
mod msssim;

pub use bdrate::bd_rate;
pub use msssim::ms_ssim;

use crate::color::Plane;
use crate::error::{Error, Result};
use std::path::Path;

/// PSNR cap used when the planes are identical, keeping RD curves finite.
pub const PSNR_CAP_DB: f64 = 100.0;

pub fn psnr(reference: &Plane, test: &Plane, peak: f64) -> Result<f64> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::shape(
            "psnr",
            format!("{}x{}", reference.width, reference.height),
            format!("{}x{}", test.width, test.height),
        ));
    }
    let mse: f64 = reference
        .data
        .iter()
        .zip(test.data.iter())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / reference.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Component weighting 6/8, 1/8, 1/8 over per-plane PSNR values.
pub fn weighted_psnr(y_db: f64, cb_db: f64, cr_db: f64) -> f64 {
    (6.0 * y_db + cb_db + cr_db) / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr_db: f64,
    pub msssim: f64,
}

/// A labeled RD curve; BD-rate needs at least four points with strictly
/// increasing bpp.
#[derive(Debug, Clone)]
pub struct RdCurve {
    pub label: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid(
                "RdCurve",
                format!("need at least 4 points for the cubic fit, got {}", points.len()),
            ));
        }
        for w in points.windows(2) {
            if !(w[1].bpp > w[0].bpp) {
                return Err(Error::invalid(
                    "RdCurve",
                    format!("bpp must strictly increase ({} then {})", w[0].bpp, w[1].bpp),
                ));
            }
        }
        if points
            .iter()
            .any(|p| !(p.bpp > 0.0) || !p.psnr_db.is_finite() || !p.msssim.is_finite())
        {
            return Err(Error::invalid("RdCurve", "points must be finite with bpp > 0"));
        }
        Ok(RdCurve {
            label: label.into(),
            points,
        })
    }
}

/// RD data as CSV: label, bpp, psnr_db, msssim.
pub fn write_rd_csv(path: &Path, label: &str, points: &[RdPoint]) -> Result<()> {
    let mut buf = String::from("label,bpp,psnr_db,msssim\n");
    for p in points {
        buf.push_str(&format!("{label},{},{},{}\n", p.bpp, p.psnr_db, p.msssim));
    }
    crate::pnm::write_atomic(path, buf.as_bytes())
}

/// Read one curve from an RD CSV written by [`write_rd_csv`].
pub fn read_rd_csv(path: &Path) -> Result<RdCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut label = String::new();
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("label,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format {
                format: "rd-csv",
                message: format!("line {}: expected 4 fields, got {}", lineno + 1, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Format {
                format: "rd-csv",
                message: format!("line {}: bad number `{s}`", lineno + 1),
            })
        };
        if label.is_empty() {
            label = fields[0].to_string();
        }
        points.push(RdPoint {
            bpp: parse(fields[1])?,
            psnr_db: parse(fields[2])?,
            msssim: parse(fields[3])?,
        });
    }
    RdCurve::new(label, points)
}
