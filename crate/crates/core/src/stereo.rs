//! Sum-of-absolute-differences block matcher with a left-right consistency check.
//!
//! Matching runs on gray values `round((r + g + b) / 3)`. A pixel is kept only when its
//! window fits inside both images for every candidate disparity, its best match is unique
//! (no other disparity outside `best ± 1` reaches the same cost), and matching back from the
//! right image lands within `lr_tolerance` of where it started.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgio::{ColorImage, DisparityImage, DEFAULT_DISPARITY_SCALE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Odd window side.
    pub window: usize,
    pub max_disparity: usize,
    pub lr_tolerance: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            window: 9,
            max_disparity: 64,
            lr_tolerance: 1,
        }
    }
}

fn gray(img: &ColorImage) -> Vec<i32> {
    img.data
        .chunks_exact(3)
        .map(|p| (p[0] as i32 + p[1] as i32 + p[2] as i32 + 1) / 3)
        .collect()
}

/// Best disparity per column of one row, or `None` where unusable. `cost(x, d)` is `None`
/// outside the admissible range.
fn winners(n: usize, max_d: usize, cost: impl Fn(usize, usize) -> Option<u32>) -> Vec<Option<(usize, u32)>> {
    (0..n)
        .map(|x| {
            let mut best: Option<(usize, u32)> = None;
            for d in 0..=max_d {
                if let Some(c) = cost(x, d) {
                    if best.map_or(true, |b| c < b.1) {
                        best = Some((d, c));
                    }
                }
            }
            best
        })
        .collect()
}

pub fn block_match(left: &ColorImage, right: &ColorImage, params: &MatchParams) -> Result<DisparityImage> {
    if left.dims() != right.dims() {
        return Err(Error::arg(format!(
            "stereo pair size mismatch: {:?} vs {:?}",
            left.dims(),
            right.dims()
        )));
    }
    if params.window % 2 == 0 || params.window == 0 {
        return Err(Error::arg(format!("window must be odd, got {}", params.window)));
    }
    let (w, h) = left.dims();
    let half = params.window / 2;
    let max_d = params.max_disparity;
    let gl = gray(left);
    let gr = gray(right);

    let rows: Vec<Vec<(f32, bool)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut out = vec![(0.0f32, false); w];
            if v < half || v + half >= h || w < params.window {
                return out;
            }
            // cost[u * (max_d + 1) + d] for the left pixel u at disparity d
            let nd = max_d + 1;
            let mut cost = vec![u32::MAX; w * nd];
            let mut colsum = vec![0u32; w];
            for d in 0..=max_d.min(w - 1) {
                for u in d..w {
                    let mut s = 0u32;
                    for j in v - half..=v + half {
                        s += (gl[j * w + u] - gr[j * w + u - d]).unsigned_abs();
                    }
                    colsum[u] = s;
                }
                // window centered at u needs columns u - half - d >= 0 and u + half < w
                let first = d + half;
                if first + half >= w {
                    continue;
                }
                let mut acc: u32 = colsum[first - half..=first + half].iter().sum();
                cost[first * nd + d] = acc;
                for u in first + 1..w - half {
                    acc = acc + colsum[u + half] - colsum[u - half - 1];
                    cost[u * nd + d] = acc;
                }
            }
            let left_cost = |u: usize, d: usize| Some(cost[u * nd + d]).filter(|&c| c != u32::MAX);
            let left_best = winners(w, max_d, left_cost);
            // right pixel x matches left pixel x + d
            let right_best = winners(w, max_d, |x, d| if x + d < w { left_cost(x + d, d) } else { None });

            for u in max_d + half..w.saturating_sub(half) {
                let Some((d, c)) = left_best[u] else { continue };
                let unique = (0..=max_d).all(|k| (k + 1 >= d && k <= d + 1) || left_cost(u, k).map_or(true, |ck| ck > c));
                if !unique {
                    continue;
                }
                let Some((dr, _)) = right_best[u - d] else { continue };
                if dr.abs_diff(d) > params.lr_tolerance {
                    continue;
                }
                let mut disp = d as f64;
                if d > 0 && d < max_d {
                    if let (Some(cm), Some(cp)) = (left_cost(u, d - 1), left_cost(u, d + 1)) {
                        let (cm, c0, cp) = (cm as f64, c as f64, cp as f64);
                        let denom = cm - 2.0 * c0 + cp;
                        if denom > 0.0 {
                            disp += (cm - cp) / (2.0 * denom);
                        }
                    }
                }
                out[u] = (disp.clamp(0.0, max_d as f64) as f32, true);
            }
            out
        })
        .collect();

    let mut img = DisparityImage::invalid(w, h);
    img.scale = DEFAULT_DISPARITY_SCALE;
    for (v, row) in rows.into_iter().enumerate() {
        for (u, (d, ok)) in row.into_iter().enumerate() {
            if ok {
                img.disparity[v * w + u] = d;
                img.valid[v * w + u] = true;
            }
        }
    }
    Ok(img)
}
