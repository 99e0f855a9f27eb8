//! Whole-image inference.
//!
//! Output cell `(i, j)` of the coarse grid sees the 16x16 window whose top-left pixel is
//! `(2j, 2i)`; its receptive-field center is `(2j + 7.5, 2i + 7.5)`. The grid is
//! `((H - 6) / 2 - 4) x ((W - 6) / 2 - 4)` and is brought back to `H x W` with bilinear
//! interpolation, clamping outside the outermost cell centers.

use super::net::{forward_map, Map};
use super::train::{normalize_byte, patch_position};
use super::{FcnModel, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::imgio::{ColorImage, ConfidenceMap};

/// Pre-upsampling network output.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ConfidenceGrid {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

/// Grid stride in image pixels.
const STRIDE: f64 = 2.0;
const CENTER_OFFSET: f64 = (PATCH_SIZE as f64 - 1.0) / 2.0;

pub fn infer_grid(model: &FcnModel, image: &ColorImage) -> Result<ConfidenceGrid> {
    if image.width < PATCH_SIZE || image.height < PATCH_SIZE {
        return Err(Error::arg(format!(
            "image {}x{} is smaller than 16x16",
            image.width, image.height
        )));
    }
    let input = Map {
        h: image.height,
        w: image.width,
        c: 3,
        data: image.data.iter().map(|&b| normalize_byte(b)).collect(),
    };
    let (w, h) = (image.width, image.height);
    let out = forward_map(&model.to_f64(), &input, |i, j| patch_position(2 * j, 2 * i, w, h));
    Ok(ConfidenceGrid {
        rows: out.h,
        cols: out.w,
        values: out.data,
    })
}

pub(crate) fn upsample(grid: &ConfidenceGrid, width: usize, height: usize) -> ConfidenceMap {
    let axis = |p: usize, n: usize| -> (usize, usize, f64) {
        let g = ((p as f64 - CENTER_OFFSET) / STRIDE).clamp(0.0, (n - 1) as f64);
        let lo = g.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, g - lo as f64)
    };
    let cols: Vec<_> = (0..width).map(|x| axis(x, grid.cols)).collect();
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let (i0, i1, ty) = axis(y, grid.rows);
        for &(j0, j1, tx) in &cols {
            let top = grid.get(i0, j0) * (1.0 - tx) + grid.get(i0, j1) * tx;
            let bot = grid.get(i1, j0) * (1.0 - tx) + grid.get(i1, j1) * tx;
            values.push((top * (1.0 - ty) + bot * ty) as f32);
        }
    }
    ConfidenceMap {
        width,
        height,
        values,
    }
}

/// Fully convolutional inference over the whole image, upsampled to its size.
pub fn infer_full(model: &FcnModel, image: &ColorImage) -> Result<ConfidenceMap> {
    let grid = infer_grid(model, image)?;
    Ok(upsample(&grid, image.width, image.height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcn::{extract_patch, forward_patch, init_model};

    fn noise_image(w: usize, h: usize, seed: u32) -> ColorImage {
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
        let data = (0..w * h * 3)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 17;
                state ^= state << 5;
                (state >> 24) as u8
            })
            .collect();
        ColorImage::new(w, h, data).unwrap()
    }

    #[test]
    fn grid_dimensions() {
        let m = init_model(0);
        let g = infer_grid(&m, &noise_image(64, 48, 1)).unwrap();
        assert_eq!((g.rows, g.cols), (17, 25));
        let full = infer_full(&m, &noise_image(64, 48, 1)).unwrap();
        assert_eq!(full.dims(), (64, 48));
    }

    #[test]
    fn single_patch_image() {
        let m = init_model(7);
        let img = noise_image(16, 16, 2);
        let g = infer_grid(&m, &img).unwrap();
        assert_eq!((g.rows, g.cols), (1, 1));
        let (s, _) = forward_patch(&m, &extract_patch(&img, 7, 7, 1.0).unwrap()).unwrap();
        assert!((g.values[0] - s).abs() < 1e-12);
        let full = infer_full(&m, &img).unwrap();
        assert!(full.values.iter().all(|&v| v == s as f32));
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            infer_full(&init_model(0), &noise_image(15, 20, 0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn upsampling_stays_within_grid_range() {
        let m = init_model(9);
        let img = noise_image(40, 36, 5);
        let g = infer_grid(&m, &img).unwrap();
        let full = upsample(&g, 40, 36);
        let lo = g.values.iter().cloned().fold(f64::INFINITY, f64::min) as f32;
        let hi = g.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) as f32;
        assert!(full.values.iter().all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
    }
}
