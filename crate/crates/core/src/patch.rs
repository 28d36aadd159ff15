//! Non-overlapping patch splitting with edge-replication padding.

use crate::color::Plane;
use crate::error::{Error, Result};

/// A plane split into non-overlapping square patches over its padded
/// extent, remembering the original extent for the merge crop.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub patches: Vec<Plane>,
    pub patch_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub original_width: usize,
    pub original_height: usize,
}

/// Replicate the last row/column out to the requested extents.
pub fn pad_replicate(plane: &Plane, target_width: usize, target_height: usize) -> Plane {
    debug_assert!(target_width >= plane.width && target_height >= plane.height);
    let mut out = Plane::new(target_width, target_height);
    for r in 0..target_height {
        let src_r = r.min(plane.height - 1);
        for c in 0..target_width {
            let src_c = c.min(plane.width - 1);
            out.set(r, c, plane.at(src_r, src_c));
        }
    }
    out
}

pub fn split_patches(plane: &Plane, patch_size: usize) -> Result<PatchGrid> {
    if patch_size < 8 || patch_size % 2 != 0 {
        return Err(Error::invalid(
            "split_patches",
            format!("patch size must be even and at least 8, got {patch_size}"),
        ));
    }
    if plane.width == 0 || plane.height == 0 {
        return Err(Error::invalid("split_patches", "empty plane"));
    }
    let padded_width = plane.width.div_ceil(patch_size) * patch_size;
    let padded_height = plane.height.div_ceil(patch_size) * patch_size;
    let padded = if padded_width == plane.width && padded_height == plane.height {
        plane.clone()
    } else {
        pad_replicate(plane, padded_width, padded_height)
    };
    let grid_cols = padded_width / patch_size;
    let grid_rows = padded_height / patch_size;
    let mut patches = Vec::with_capacity(grid_rows * grid_cols);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let mut p = Plane::new(patch_size, patch_size);
            for r in 0..patch_size {
                for c in 0..patch_size {
                    p.set(r, c, padded.at(gr * patch_size + r, gc * patch_size + c));
                }
            }
            patches.push(p);
        }
    }
    Ok(PatchGrid {
        patches,
        patch_size,
        grid_rows,
        grid_cols,
        padded_width,
        padded_height,
        original_width: plane.width,
        original_height: plane.height,
    })
}

/// Reassemble the padded plane and crop back to the original extent.
pub fn merge_patches(grid: &PatchGrid) -> Result<Plane> {
    if grid.patches.len() != grid.grid_rows * grid.grid_cols {
        return Err(Error::shape(
            "merge_patches",
            format!("{} patches", grid.grid_rows * grid.grid_cols),
            format!("{}", grid.patches.len()),
        ));
    }
    let ps = grid.patch_size;
    let mut out = Plane::new(grid.original_width, grid.original_height);
    for gr in 0..grid.grid_rows {
        for gc in 0..grid.grid_cols {
            let patch = &grid.patches[gr * grid.grid_cols + gc];
            if patch.width != ps || patch.height != ps {
                return Err(Error::shape(
                    "merge_patches",
                    format!("{ps}x{ps} patch"),
                    format!("{}x{}", patch.width, patch.height),
                ));
            }
            for r in 0..ps {
                let row = gr * ps + r;
                if row >= grid.original_height {
                    break;
                }
                for c in 0..ps {
                    let col = gc * ps + c;
                    if col >= grid.original_width {
                        break;
                    }
                    out.set(row, col, patch.at(r, c));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_vec(w, h, (0..w * h).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    #[test]
    fn kodak_dims_give_24_patches() {
        let plane = Plane::new(768, 512);
        let grid = split_patches(&plane, 128).unwrap();
        assert_eq!(grid.patches.len(), 24);
        assert_eq!((grid.grid_cols, grid.grid_rows), (6, 4));
    }

    #[test]
    fn non_multiple_extent_pads_then_crops() {
        let plane = random_plane(500, 500, 1);
        let grid = split_patches(&plane, 128).unwrap();
        assert_eq!((grid.padded_width, grid.padded_height), (512, 512));
        assert_eq!(grid.patches.len(), 16);
        let merged = merge_patches(&grid).unwrap();
        assert_eq!(merged, plane);
    }

    #[test]
    fn merge_inverts_split_exactly() {
        for (w, h) in [(128, 128), (129, 64), (300, 200), (8, 8), (1, 1)] {
            let plane = random_plane(w, h, w as u64 * 31 + h as u64);
            let grid = split_patches(&plane, 8).unwrap();
            assert_eq!(merge_patches(&grid).unwrap(), plane);
        }
    }

    #[test]
    fn padding_replicates_edges() {
        let mut plane = Plane::new(2, 1);
        plane.set(0, 0, 0.25);
        plane.set(0, 1, 0.75);
        let padded = pad_replicate(&plane, 4, 2);
        assert_eq!(padded.at(0, 2), 0.75);
        assert_eq!(padded.at(0, 3), 0.75);
        assert_eq!(padded.at(1, 0), 0.25);
        assert_eq!(padded.at(1, 3), 0.75);
    }
}
