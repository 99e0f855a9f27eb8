//! Disparity Stixel World.
//!
//! Each image column is split into vertically stacked segments, each either GROUND (following
//! the ground line `d(v)`) or OBSTACLE (fronto-parallel at constant disparity `mu`). The
//! labeling minimizes
//!
//! ```text
//! sum of segment data costs + beta_seg * (segments - 1) + beta_base * [bottom is OBSTACLE]
//! ```
//!
//! subject to: no GROUND directly above GROUND, an OBSTACLE directly above GROUND must stand
//! on it (`mu >= d(v_bottom) - delta_grav`), and GROUND never reaches above the horizon.
//!
//! Rows are indexed top-down (`v = 0` is the top image row); segments are listed bottom-up.

mod costs;
mod dp;
mod oracle;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::GroundPlane;
use crate::imgio::{DisparityImage, Label, LabelMask};

pub use costs::{column_costs, ColumnCosts};
pub use dp::stixel_dp;
pub use oracle::{brute_force_segment, ORACLE_MAX_ROWS, ORACLE_MAX_SEGMENTS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StixelParams {
    /// Disparity noise standard deviation.
    pub sigma: f64,
    /// Ceiling of the truncated quadratic residual cost.
    pub kappa: f64,
    /// Cost of an invalid pixel, whatever the class.
    pub c_invalid: f64,
    /// Penalty per segment boundary.
    pub beta_seg: f64,
    /// Penalty for an OBSTACLE bottom segment; favors ground just below the field of view.
    pub beta_base: f64,
    /// How far an obstacle's disparity may fall short of the ground it stands on.
    pub delta_grav: f64,
    /// Image columns merged into one stixel.
    pub stixel_width: usize,
}

impl Default for StixelParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            kappa: 4.0,
            c_invalid: 1.0,
            beta_seg: 8.0,
            beta_base: 4.0,
            delta_grav: 2.0,
            stixel_width: 1,
        }
    }
}

impl StixelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma, self.c_invalid, self.beta_seg, self.beta_base, self.delta_grav];
        if positive.iter().any(|&x| !(x > 0.0)) || !(self.kappa > 1.0) || self.stixel_width == 0 {
            return Err(Error::arg(format!("invalid stixel parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StixelClass {
    Ground,
    Obstacle,
}

impl StixelClass {
    pub const BOTH: [StixelClass; 2] = [StixelClass::Ground, StixelClass::Obstacle];

    pub fn name(self) -> &'static str {
        match self {
            StixelClass::Ground => "GROUND",
            StixelClass::Obstacle => "OBSTACLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Lowest row in the image (largest `v`), inclusive.
    pub v_bottom: usize,
    /// Highest row in the image (smallest `v`), inclusive.
    pub v_top: usize,
    pub class: StixelClass,
    /// Obstacle disparity; 0 for ground.
    pub mu: f64,
    /// Data cost of the rows covered, without penalties.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StixelColumnLabeling {
    /// First image column covered.
    pub column: usize,
    /// Image columns covered.
    pub width: usize,
    /// Bottom-up.
    pub segments: Vec<Segment>,
    pub total_cost: f64,
    /// No valid disparity in the column; the mask marks it IGNORE.
    pub all_invalid: bool,
}

impl StixelColumnLabeling {
    /// Checks the bottom-up tiling of `[0, height - 1]` and the no-adjacent-ground rule.
    pub fn check_structure(&self, height: usize) -> Result<()> {
        let mut next_bottom = height.checked_sub(1).ok_or_else(|| Error::arg("empty column"))?;
        for (i, s) in self.segments.iter().enumerate() {
            if s.v_bottom != next_bottom || s.v_top > s.v_bottom {
                return Err(Error::arg(format!("segment {i} breaks the tiling: {s:?}")));
            }
            if i > 0 && s.class == StixelClass::Ground && self.segments[i - 1].class == StixelClass::Ground {
                return Err(Error::arg(format!("adjacent ground segments at {i}")));
            }
            if s.v_top == 0 {
                return if i + 1 == self.segments.len() {
                    Ok(())
                } else {
                    Err(Error::arg("segments continue past the top row"))
                };
            }
            next_bottom = s.v_top - 1;
        }
        Err(Error::arg("segments do not reach the top row"))
    }
}

/// Disparities and validity of one column, top-down.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnData {
    pub disparity: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ColumnData {
    pub fn new(disparity: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if disparity.len() != valid.len() || disparity.is_empty() {
            return Err(Error::arg("column disparity/validity length mismatch or empty"));
        }
        Ok(Self { disparity, valid })
    }

    /// Column from values where `None` marks an invalid pixel.
    pub fn from_options(values: &[Option<f64>]) -> Self {
        Self {
            disparity: values.iter().map(|v| v.unwrap_or(0.0)).collect(),
            valid: values.iter().map(Option::is_some).collect(),
        }
    }

    /// Per-row mean over image columns `[u0, u1)`; a row is valid if any pixel is.
    pub fn from_image(disp: &DisparityImage, u0: usize, u1: usize) -> Self {
        let mut disparity = Vec::with_capacity(disp.height);
        let mut valid = Vec::with_capacity(disp.height);
        for v in 0..disp.height {
            let (mut sum, mut n) = (0.0f64, 0usize);
            for u in u0..u1 {
                if let Some(d) = disp.get(u, v) {
                    sum += d as f64;
                    n += 1;
                }
            }
            disparity.push(if n > 0 { sum / n as f64 } else { 0.0 });
            valid.push(n > 0);
        }
        Self { disparity, valid }
    }

    pub fn height(&self) -> usize {
        self.disparity.len()
    }
}

/// Labeling for a column with no valid pixel: one OBSTACLE segment at `mu = 0`, flagged.
fn all_invalid_labeling(costs: &ColumnCosts, params: &StixelParams) -> StixelColumnLabeling {
    let h = costs.height();
    let (mu, cost) = costs.obstacle(0, h - 1);
    StixelColumnLabeling {
        column: 0,
        width: 1,
        segments: vec![Segment {
            v_bottom: h - 1,
            v_top: 0,
            class: StixelClass::Obstacle,
            mu,
            cost,
        }],
        total_cost: cost + params.beta_base,
        all_invalid: true,
    }
}

/// Segments every stixel of a disparity image, left to right.
pub fn stixel_image(disp: &DisparityImage, plane: &GroundPlane, params: &StixelParams) -> Result<Vec<StixelColumnLabeling>> {
    params.validate()?;
    let w = params.stixel_width;
    let starts: Vec<usize> = (0..disp.width).step_by(w).collect();
    Ok(starts
        .into_par_iter()
        .map(|u0| {
            let u1 = (u0 + w).min(disp.width);
            let column = ColumnData::from_image(disp, u0, u1);
            let mut lab = stixel_dp(&column, plane, params);
            lab.column = u0;
            lab.width = u1 - u0;
            lab
        })
        .collect())
}

/// GROUND rows become FREE, OBSTACLE rows OBSTACLE, flagged columns IGNORE.
pub fn labeling_to_mask(labelings: &[StixelColumnLabeling], width: usize, height: usize) -> Result<LabelMask> {
    let mut mask = LabelMask::filled(width, height, Label::Ignore);
    let mut covered = vec![false; width];
    for lab in labelings {
        lab.check_structure(height)?;
        for u in lab.column..lab.column + lab.width {
            if u >= width {
                return Err(Error::arg(format!("labeling column {u} outside width {width}")));
            }
            covered[u] = true;
            for s in &lab.segments {
                let label = match (lab.all_invalid, s.class) {
                    (true, _) => Label::Ignore,
                    (false, StixelClass::Ground) => Label::Free,
                    (false, StixelClass::Obstacle) => Label::Obstacle,
                };
                for v in s.v_top..=s.v_bottom {
                    mask.set(u, v, label);
                }
            }
        }
    }
    if let Some(u) = covered.iter().position(|c| !c) {
        return Err(Error::arg(format!("column {u} has no labeling")));
    }
    Ok(mask)
}

pub const SEGMENTS_CSV_HEADER: &str = "column,v_bottom,v_top,class,mu,cost";

/// One row per segment; `column` is the first image column of the stixel.
pub fn segments_csv(labelings: &[StixelColumnLabeling]) -> String {
    let mut out = format!("{SEGMENTS_CSV_HEADER}\n");
    for lab in labelings {
        for s in &lab.segments {
            let _ = writeln!(out, "{},{},{},{},{},{}", lab.column, s.v_bottom, s.v_top, s.class.name(), s.mu, s.cost);
        }
    }
    out
}

pub fn write_segments_csv(labelings: &[StixelColumnLabeling], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, segments_csv(labelings)).map_err(|e| Error::io(path, e))
}
