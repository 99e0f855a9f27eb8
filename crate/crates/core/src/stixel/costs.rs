//! Segment data costs.
//!
//! A valid pixel with residual `e` costs `min((e / sigma)^2, kappa)`; an invalid pixel costs
//! `c_invalid` for either class. Ground residuals are taken against the ground line, obstacle
//! residuals against the mean valid disparity of the segment.

use super::{ColumnData, StixelParams};
use crate::geometry::GroundPlane;

/// Cost tables for every segment `[top, bottom]` of one column.
#[derive(Debug, Clone)]
pub struct ColumnCosts {
    h: usize,
    ground: Vec<f64>,
    obstacle: Vec<f64>,
    mu: Vec<f64>,
    any_valid: bool,
}

#[inline]
fn rho(e: f64, params: &StixelParams) -> f64 {
    let r = e / params.sigma;
    (r * r).min(params.kappa)
}

impl ColumnCosts {
    pub fn height(&self) -> usize {
        self.h
    }

    pub fn any_valid(&self) -> bool {
        self.any_valid
    }

    #[inline]
    fn idx(&self, top: usize, bottom: usize) -> usize {
        debug_assert!(top <= bottom && bottom < self.h);
        top * self.h + bottom
    }

    /// Ground cost of rows `top..=bottom`.
    #[inline]
    pub fn ground(&self, top: usize, bottom: usize) -> f64 {
        self.ground[self.idx(top, bottom)]
    }

    /// `(mu, cost)` of an obstacle over rows `top..=bottom`; `mu = 0` without valid pixels.
    #[inline]
    pub fn obstacle(&self, top: usize, bottom: usize) -> (f64, f64) {
        let i = self.idx(top, bottom);
        (self.mu[i], self.obstacle[i])
    }
}

/// Tabulates ground and obstacle costs for all `H (H + 1) / 2` segments.
///
/// Sums always run top-down over the segment, so a segment's cost does not depend on rows
/// outside it. Obstacle costs are evaluated by a direct pass over the segment once its mean
/// is known, which keeps truncation exact.
pub fn column_costs(column: &ColumnData, plane: &GroundPlane, params: &StixelParams) -> ColumnCosts {
    let h = column.height();
    let ground_px: Vec<f64> = (0..h)
        .map(|v| {
            if column.valid[v] {
                rho(column.disparity[v] - plane.ground_expect(v as f64), params)
            } else {
                params.c_invalid
            }
        })
        .collect();
    let mut ground = vec![0.0; h * h];
    let mut obstacle = vec![0.0; h * h];
    let mut mu = vec![0.0; h * h];
    for top in 0..h {
        let (mut g, mut sum, mut n) = (0.0, 0.0, 0usize);
        for bottom in top..h {
            g += ground_px[bottom];
            if column.valid[bottom] {
                sum += column.disparity[bottom];
                n += 1;
            }
            let m = if n > 0 { sum / n as f64 } else { 0.0 };
            let mut c = 0.0;
            for v in top..=bottom {
                c += if column.valid[v] {
                    rho(column.disparity[v] - m, params)
                } else {
                    params.c_invalid
                };
            }
            let i = top * h + bottom;
            ground[i] = g;
            obstacle[i] = c;
            mu[i] = m;
        }
    }
    ColumnCosts {
        h,
        ground,
        obstacle,
        mu,
        any_valid: column.valid.iter().any(|&v| v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = StixelParams::default();
        let plane = GroundPlane::new(1.0, 0.0);
        let on_line = ColumnData::from_options(&[Some(0.0), Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(column_costs(&on_line, &plane, &p).ground(0, 3), 0.0);

        let flat = ColumnData::from_options(&[Some(20.0); 4]);
        assert_eq!(column_costs(&flat, &plane, &p).obstacle(0, 3), (20.0, 0.0));

        // one valid row d = 20 where the ground expects 10
        let plane10 = GroundPlane::new(1.0, -10.0);
        let one = ColumnData::from_options(&[Some(20.0)]);
        assert_eq!(column_costs(&one, &plane10, &p).ground(0, 0), 4.0);
    }

    #[test]
    fn invalid_rows_cost_c_invalid_and_skip_mean() {
        let p = StixelParams {
            c_invalid: 1.5,
            ..StixelParams::default()
        };
        let col = ColumnData::from_options(&[None, Some(10.0), None, Some(11.0)]);
        let c = column_costs(&col, &GroundPlane::new(1.0, 0.0), &p);
        let (mu, cost) = c.obstacle(0, 3);
        assert_eq!(mu, 10.5);
        assert!((cost - (3.0 + 0.25 + 0.25)).abs() < 1e-12);
        assert_eq!(c.obstacle(0, 0), (0.0, 1.5));
        assert_eq!(c.ground(2, 2), 1.5);
    }

    #[test]
    fn direct_sum_oracle() {
        let p = StixelParams::default();
        let plane = GroundPlane::new(0.7, 2.0);
        let col = ColumnData::from_options(&[Some(3.0), None, Some(0.5), Some(7.0), Some(2.0), Some(4.5)]);
        let c = column_costs(&col, &plane, &p);
        for top in 0..6 {
            for bottom in top..6 {
                let rows = top..=bottom;
                let valid: Vec<f64> = rows.clone().filter_map(|v| col.valid[v].then(|| col.disparity[v])).collect();
                let m = if valid.is_empty() { 0.0 } else { valid.iter().sum::<f64>() / valid.len() as f64 };
                let g: f64 = rows
                    .clone()
                    .map(|v| if col.valid[v] { ((col.disparity[v] - plane.ground_expect(v as f64)).powi(2)).min(4.0) } else { 1.0 })
                    .sum();
                let o: f64 = rows
                    .map(|v| if col.valid[v] { ((col.disparity[v] - m).powi(2)).min(4.0) } else { 1.0 })
                    .sum();
                assert!((c.ground(top, bottom) - g).abs() < 1e-12);
                assert!((c.obstacle(top, bottom).1 - o).abs() < 1e-12);
                assert!((c.obstacle(top, bottom).0 - m).abs() < 1e-12);
            }
        }
    }
}
