//! Scalar quantization (y' = [2^(B-1) y], half away from zero) and
//! vertical-scan tiling of feature maps into a single 2-D grid.

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION_BITS: u8 = 12;

/// Real-valued 2-D grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Grid::from_vec",
                format!("{} values", rows * cols),
                format!("{}", data.len()),
            ));
        }
        Ok(Grid { rows, cols, data })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Integer coefficient grid plus the precision it was quantized at.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPlane {
    pub rows: usize,
    pub cols: usize,
    pub coefficients: Vec<i32>,
    /// Smallest n with max|coefficient| < 2^n.
    pub num_bitplanes: u8,
    pub precision_bits: u8,
}

pub(crate) fn bitplanes_for(coefficients: &[i32]) -> u8 {
    let max = coefficients.iter().map(|&c| c.unsigned_abs()).max().unwrap_or(0);
    (32 - max.leading_zeros()) as u8
}

impl QuantizedPlane {
    pub fn from_coefficients(
        rows: usize,
        cols: usize,
        coefficients: Vec<i32>,
        precision_bits: u8,
    ) -> Result<Self> {
        if coefficients.len() != rows * cols {
            return Err(Error::shape(
                "QuantizedPlane",
                format!("{} coefficients", rows * cols),
                format!("{}", coefficients.len()),
            ));
        }
        let num_bitplanes = bitplanes_for(&coefficients);
        Ok(QuantizedPlane {
            rows,
            cols,
            coefficients,
            num_bitplanes,
            precision_bits,
        })
    }
}

/// y' = round(2^(B-1) * y_rot), halves away from zero.
pub fn quantize(grid: &Grid, precision_bits: u8) -> Result<QuantizedPlane> {
    let scale = (1i64 << (precision_bits - 1)) as f64;
    let coefficients = grid.data.iter().map(|&v| (v * scale).round() as i32).collect();
    QuantizedPlane::from_coefficients(grid.rows, grid.cols, coefficients, precision_bits)
}

/// y~ = y' / 2^(B-1).
pub fn dequantize(plane: &QuantizedPlane) -> Grid {
    let scale = (1i64 << (plane.precision_bits - 1)) as f64;
    Grid {
        rows: plane.rows,
        cols: plane.cols,
        data: plane.coefficients.iter().map(|&c| c as f64 / scale).collect(),
    }
}

/// Tile grid shape for n maps: columns are the largest power of two that
/// does not exceed ceil(sqrt(n)); rows take the rest. For n = 32 that is
/// 4 columns by 8 rows of tiles.
pub fn tile_grid_shape(n_maps: usize) -> (usize, usize) {
    debug_assert!(n_maps > 0);
    let ceil_sqrt = (n_maps as f64).sqrt().ceil() as usize;
    let mut cols = 1;
    while cols * 2 <= ceil_sqrt {
        cols *= 2;
    }
    let rows = n_maps.div_ceil(cols);
    (rows, cols)
}

/// Arrange equally-sized maps into one grid in vertical scan order:
/// top-to-bottom within a tile column, then the next column. Slots past
/// the map count stay zero.
pub fn tile_vertical_scan(maps: &[Grid]) -> Result<Grid> {
    let first = maps.first().ok_or_else(|| Error::invalid("tile_vertical_scan", "no maps"))?;
    let (h, w) = (first.rows, first.cols);
    if maps.iter().any(|m| m.rows != h || m.cols != w) {
        return Err(Error::shape(
            "tile_vertical_scan",
            format!("{h}x{w} maps"),
            "mixed map extents".to_string(),
        ));
    }
    let (g_rows, g_cols) = tile_grid_shape(maps.len());
    let mut out = Grid::zeros(g_rows * h, g_cols * w);
    for (i, map) in maps.iter().enumerate() {
        let tile_col = i / g_rows;
        let tile_row = i % g_rows;
        for r in 0..h {
            let dst_row = tile_row * h + r;
            let dst_base = dst_row * out.cols + tile_col * w;
            out.data[dst_base..dst_base + w].copy_from_slice(&map.data[r * w..(r + 1) * w]);
        }
    }
    Ok(out)
}

/// Inverse of [`tile_vertical_scan`] for `n_maps` maps of `h` x `w`.
pub fn untile_vertical_scan(grid: &Grid, n_maps: usize, h: usize, w: usize) -> Result<Vec<Grid>> {
    let (g_rows, g_cols) = tile_grid_shape(n_maps);
    if grid.rows != g_rows * h || grid.cols != g_cols * w {
        return Err(Error::shape(
            "untile_vertical_scan",
            format!("{}x{} grid", g_rows * h, g_cols * w),
            format!("{}x{}", grid.rows, grid.cols),
        ));
    }
    let mut maps = Vec::with_capacity(n_maps);
    for i in 0..n_maps {
        let tile_col = i / g_rows;
        let tile_row = i % g_rows;
        let mut map = Grid::zeros(h, w);
        for r in 0..h {
            let src_row = tile_row * h + r;
            let src_base = src_row * grid.cols + tile_col * w;
            map.data[r * w..(r + 1) * w].copy_from_slice(&grid.data[src_base..src_base + w]);
        }
        maps.push(map);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_grid(v: f64) -> Grid {
        Grid::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&scalar_grid(0.0), 12).unwrap().coefficients[0], 0);
        assert_eq!(quantize(&scalar_grid(0.5), 12).unwrap().coefficients[0], 1024);
        assert_eq!(quantize(&scalar_grid(-0.3), 12).unwrap().coefficients[0], -614);
    }

    #[test]
    fn dequantize_examples() {
        let p = quantize(&scalar_grid(0.5), 12).unwrap();
        assert_eq!(dequantize(&p).data[0], 0.5);
        let p = quantize(&scalar_grid(0.0), 12).unwrap();
        assert_eq!(dequantize(&p).data[0], 0.0);
    }

    #[test]
    fn roundtrip_error_bounded_by_half_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let bound = 1.0 / 4096.0; // 2^-12 for B = 12
        for _ in 0..10_000 {
            let v = rng.gen::<f64>() * 8.0 - 4.0;
            let p = quantize(&scalar_grid(v), 12).unwrap();
            let back = dequantize(&p).data[0];
            assert!((back - v).abs() <= bound, "v={v}, back={back}");
        }
    }

    #[test]
    fn num_bitplanes_tracks_magnitude() {
        let p = QuantizedPlane::from_coefficients(1, 3, vec![0, 5, -8], 12).unwrap();
        assert_eq!(p.num_bitplanes, 4); // |-8| needs planes 0..3
        let p = QuantizedPlane::from_coefficients(1, 1, vec![0], 12).unwrap();
        assert_eq!(p.num_bitplanes, 0);
    }

    #[test]
    fn tile_shapes() {
        assert_eq!(tile_grid_shape(4), (2, 2));
        assert_eq!(tile_grid_shape(32), (8, 4));
        assert_eq!(tile_grid_shape(64), (8, 8));
        assert_eq!(tile_grid_shape(1), (1, 1));
        assert_eq!(tile_grid_shape(2), (1, 2));
    }

    #[test]
    fn four_single_pixel_maps_tile_column_major() {
        let maps: Vec<Grid> = (0..4).map(|i| scalar_grid(i as f64)).collect();
        let grid = tile_vertical_scan(&maps).unwrap();
        assert_eq!(grid.rows, 2);
        assert_eq!(grid.cols, 2);
        assert_eq!(grid.data, vec![0.0, 2.0, 1.0, 3.0]);
    }

    #[test]
    fn thirty_two_maps_of_16x16_make_a_128_by_64_grid() {
        let maps: Vec<Grid> = (0..32).map(|_| Grid::zeros(16, 16)).collect();
        let grid = tile_vertical_scan(&maps).unwrap();
        assert_eq!((grid.rows, grid.cols), (128, 64));
    }

    #[test]
    fn untile_inverts_tile() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &(n, h, w) in &[(3usize, 2usize, 5usize), (8, 4, 4), (5, 1, 7), (32, 16, 16)] {
            let maps: Vec<Grid> = (0..n)
                .map(|_| {
                    let data = (0..h * w).map(|_| rng.gen::<f64>()).collect();
                    Grid::from_vec(h, w, data).unwrap()
                })
                .collect();
            let grid = tile_vertical_scan(&maps).unwrap();
            let back = untile_vertical_scan(&grid, n, h, w).unwrap();
            assert_eq!(back, maps);
        }
    }
}
