//! Binary PPM (P6) and PGM (P5) readers and writers.
//!
//! These are the fixture formats for bit-exact tests: 8-bit maxval, no
//! interlacing, headers with whitespace and `#` comments.

use crate::color::{Plane, RgbImage};
use crate::error::{Error, Result};
use std::path::Path;

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "pnm",
        message: message.into(),
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn skip_whitespace_and_comments(&mut self) -> Result<()> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => return Ok(()),
                None => return Err(format_err("unexpected end of header")),
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_whitespace_and_comments()?;
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .map(|b| b.is_ascii_digit())
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(format_err("expected a number in the header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err("bad number in header"))
    }
}

/// Decode P5 or P6 bytes. Grayscale replicates into all three channels.
pub fn decode_pnm(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.len() < 2 {
        return Err(format_err("file too short"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(format_err(format!(
                "unsupported magic {:?} (binary P5/P6 required)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut p = HeaderParser { bytes, pos: 2 };
    let width = p.number()?;
    let height = p.number()?;
    let maxval = p.number()?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(format!("maxval {maxval} unsupported (need 1..=255)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(p.pos) {
        Some(b) if b.is_ascii_whitespace() => p.pos += 1,
        _ => return Err(format_err("missing raster separator")),
    }
    let need = width * height * channels;
    let raster = bytes
        .get(p.pos..p.pos + need)
        .ok_or_else(|| format_err("raster shorter than header promises"))?;

    let scale = 1.0 / maxval as f32;
    let n = width * height;
    let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    if channels == 1 {
        for &v in raster {
            let f = v as f32 * scale;
            r.push(f);
            g.push(f);
            b.push(f);
        }
    } else {
        for px in raster.chunks_exact(3) {
            r.push(px[0] as f32 * scale);
            g.push(px[1] as f32 * scale);
            b.push(px[2] as f32 * scale);
        }
    }
    Ok(RgbImage { width, height, r, g, b })
}

pub fn read_pnm(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

#[inline]
fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(image.width * image.height * 3);
    for i in 0..image.width * image.height {
        out.push(to_byte(image.r[i]));
        out.push(to_byte(image.g[i]));
        out.push(to_byte(image.b[i]));
    }
    out
}

pub fn encode_pgm(plane: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", plane.width, plane.height).into_bytes();
    out.reserve(plane.data.len());
    for &v in &plane.data {
        out.push(to_byte(v));
    }
    out
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_ppm(image))
}

pub fn write_pgm(path: &Path, plane: &Plane) -> Result<()> {
    write_atomic(path, &encode_pgm(plane))
}

/// Temp-then-rename so failures never leave a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip() {
        let img = RgbImage {
            width: 2,
            height: 2,
            r: vec![0.0, 1.0, 0.5, 0.25],
            g: vec![1.0, 0.0, 0.5, 0.75],
            b: vec![0.5, 0.5, 0.0, 1.0],
        };
        let bytes = encode_ppm(&img);
        let back = decode_pnm(&bytes).unwrap();
        assert_eq!(back.width, 2);
        assert_eq!(back.height, 2);
        let tol = 0.51 / 255.0;
        for i in 0..4 {
            assert!((back.r[i] - img.r[i]).abs() <= tol);
            assert!((back.g[i] - img.g[i]).abs() <= tol);
            assert!((back.b[i] - img.b[i]).abs() <= tol);
        }
    }

    #[test]
    fn pgm_replicates_gray() {
        let plane = Plane::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let bytes = encode_pgm(&plane);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.r, img.g);
        assert_eq!(img.g, img.b);
        assert_eq!(img.r, vec![0.0, 1.0]);
    }

    #[test]
    fn comments_and_whitespace_are_tolerated() {
        let bytes = b"P5 # comment\n# another\n 2\t1 # w h\n255\n\x00\xff".to_vec();
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.r, vec![0.0, 1.0]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(decode_pnm(b"P3\n1 1\n255\n0 0 0").is_err()); // ascii variant
        assert!(decode_pnm(b"P6\n2 2\n255\nxx").is_err()); // short raster
        assert!(decode_pnm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err()); // 16-bit
    }
}
