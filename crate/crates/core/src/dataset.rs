//! Training-set ingestion: luma planes from a directory of PNM images,
//! served as seeded uniform random crops.

use crate::cae::PatchSource;
use crate::color::{rgb_to_ycbcr, Plane};
use crate::error::{Error, Result};
use crate::patch::pad_replicate;
use crate::pnm::read_pnm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// A deterministic pool of `count` random crops. Crop positions are drawn
/// up front from the seed (image index plus top-left corner, uniform over
/// valid positions), so the patch sequence is a pure function of
/// (directory contents, patch_size, count, seed). Iteration cycles.
#[derive(Debug)]
pub struct CropSampler {
    images: Vec<Plane>,
    crops: Vec<(usize, usize, usize)>,
    cursor: usize,
    patch_size: usize,
}

/// Load every decodable PNM image under `dir` (luma plane only; images
/// smaller than the patch are edge-replicated up) and derive `count`
/// seeded crops. Errors if nothing decodes, listing the rejects.
pub fn ingest_dataset(
    dir: &Path,
    patch_size: usize,
    count: usize,
    seed: u64,
) -> Result<CropSampler> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("pgm") | Some("pnm")
            )
        })
        .collect();
    paths.sort();

    let mut images = Vec::new();
    let mut rejects = Vec::new();
    for path in &paths {
        match read_pnm(path) {
            Ok(rgb) => {
                let luma = rgb_to_ycbcr(&rgb).y;
                let w = luma.width.max(patch_size);
                let h = luma.height.max(patch_size);
                let luma = if (w, h) != (luma.width, luma.height) {
                    pad_replicate(&luma, w, h)
                } else {
                    luma
                };
                images.push(luma);
            }
            Err(e) => rejects.push(format!("{}: {e}", path.display())),
        }
    }
    if images.is_empty() {
        let detail = if rejects.is_empty() {
            format!("no .ppm/.pgm/.pnm files in {}", dir.display())
        } else {
            format!("all files rejected: {}", rejects.join("; "))
        };
        return Err(Error::EmptyDataset(detail));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crops = (0..count)
        .map(|_| {
            let idx = rng.gen_range(0..images.len());
            let img = &images[idx];
            let r = rng.gen_range(0..=img.height - patch_size);
            let c = rng.gen_range(0..=img.width - patch_size);
            (idx, r, c)
        })
        .collect();
    Ok(CropSampler {
        images,
        crops,
        cursor: 0,
        patch_size,
    })
}

impl CropSampler {
    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }
}

impl PatchSource for CropSampler {
    fn next_patch(&mut self) -> Option<Plane> {
        if self.crops.is_empty() {
            return None;
        }
        let (idx, r0, c0) = self.crops[self.cursor % self.crops.len()];
        self.cursor += 1;
        let img = &self.images[idx];
        let ps = self.patch_size;
        let mut p = Plane::new(ps, ps);
        for r in 0..ps {
            for c in 0..ps {
                p.set(r, c, img.at(r0 + r, c0 + c));
            }
        }
        Some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::RgbImage;
    use crate::pnm::write_ppm;
    use rand::Rng;

    fn write_noise_image(dir: &Path, name: &str, w: usize, h: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = w * h;
        let img = RgbImage {
            width: w,
            height: h,
            r: (0..n).map(|_| rng.gen()).collect(),
            g: (0..n).map(|_| rng.gen()).collect(),
            b: (0..n).map(|_| rng.gen()).collect(),
        };
        write_ppm(&dir.join(name), &img).unwrap();
    }

    #[test]
    fn fixed_seed_gives_identical_sequences() {
        let dir = tempfile::tempdir().unwrap();
        write_noise_image(dir.path(), "a.ppm", 32, 24, 1);
        write_noise_image(dir.path(), "b.ppm", 40, 40, 2);
        let collect = || {
            let mut s = ingest_dataset(dir.path(), 16, 10, 99).unwrap();
            (0..10).map(|_| s.next_patch().unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(collect(), collect());
    }

    #[test]
    fn small_images_are_padded_up() {
        let dir = tempfile::tempdir().unwrap();
        write_noise_image(dir.path(), "tiny.ppm", 4, 4, 3);
        let mut s = ingest_dataset(dir.path(), 16, 3, 0).unwrap();
        let p = s.next_patch().unwrap();
        assert_eq!((p.width, p.height), (16, 16));
    }

    #[test]
    fn empty_directory_errors_with_detail() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest_dataset(dir.path(), 16, 4, 0).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn undecodable_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("junk.ppm"), b"not a ppm").unwrap();
        let err = ingest_dataset(dir.path(), 16, 4, 0).unwrap_err();
        assert!(err.to_string().contains("junk.ppm"));
    }

    #[test]
    fn zero_count_yields_empty_source() {
        let dir = tempfile::tempdir().unwrap();
        write_noise_image(dir.path(), "a.ppm", 32, 32, 4);
        let mut s = ingest_dataset(dir.path(), 16, 0, 0).unwrap();
        assert!(s.is_empty());
        assert!(s.next_patch().is_none());
    }
}
