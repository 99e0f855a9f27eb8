//! Camera model, ground-plane tracking in v-disparity space, and birds-eye-view mapping.
//!
//! The road is modeled as a plane seen by a camera with zero roll, which makes ground
//! disparity a linear function of the image row:
//!
//! ```text
//! d(v) = max(0, alpha * (v - v_horizon))
//! ```
//!
//! Pixel `(u, v)` below the horizon then sits on the ground at depth `z = f b / d(v)` and
//! lateral offset `x = (u - cx) z / f`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imgio::{DisparityImage, Label, LabelMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    /// Focal length in pixels.
    pub focal: f64,
    /// Stereo baseline in meters.
    pub baseline: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.baseline > 0.0) {
            return Err(Error::arg("focal length and baseline must be positive"));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::arg(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Linear ground model in v-disparity space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    /// Disparity gained per image row below the horizon.
    pub alpha: f64,
    /// Row where ground disparity reaches zero. May lie above the image (negative) for a
    /// camera pitched toward the road.
    pub v_horizon: f64,
}

impl GroundPlane {
    pub fn new(alpha: f64, v_horizon: f64) -> Self {
        Self { alpha, v_horizon }
    }

    /// Plane seen by a level camera mounted `height_m` above a flat road.
    pub fn from_camera_height(rig: &CameraRig, height_m: f64) -> Self {
        Self {
            alpha: rig.baseline / height_m,
            v_horizon: rig.cy,
        }
    }

    /// Expected ground disparity at row `v`; zero at and above the horizon.
    #[inline]
    pub fn ground_expect(&self, v: f64) -> f64 {
        (self.alpha * (v - self.v_horizon)).max(0.0)
    }

    fn blend(&self, fit: &GroundPlane, lambda: f64) -> GroundPlane {
        GroundPlane {
            alpha: lambda * self.alpha + (1.0 - lambda) * fit.alpha,
            v_horizon: lambda * self.v_horizon + (1.0 - lambda) * fit.v_horizon,
        }
    }
}

pub fn ground_expect(plane: &GroundPlane, v: f64) -> f64 {
    plane.ground_expect(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub iterations: usize,
    /// Inlier band half-width, in disparity units.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    /// Weight of the previous plane when blending: `lambda * prev + (1 - lambda) * fit`.
    pub blend: f64,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 1.0,
            min_inliers: 50,
            blend: 0.7,
            seed: 0,
        }
    }
}

/// Least-squares line `d = a v + c` through the given points.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mv = points.iter().map(|p| p.0).sum::<f64>() / n;
    let md = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut svv, mut svd) = (0.0, 0.0);
    for &(v, d) in points {
        svv += (v - mv) * (v - mv);
        svd += (v - mv) * (d - md);
    }
    if svv <= 0.0 {
        return None;
    }
    let a = svd / svv;
    Some((a, md - a * mv))
}

/// Robust ground-plane fit on the v-disparity points of the lower image half.
///
/// RANSAC over point pairs picks the line with the largest inlier band, which is then refit
/// by least squares. With `prev`, the result is blended toward it.
pub fn fit_ground_plane(
    disp: &DisparityImage,
    params: &FitParams,
    prev: Option<&GroundPlane>,
) -> Result<GroundPlane> {
    let mut points = Vec::new();
    for v in disp.height / 2..disp.height {
        for u in 0..disp.width {
            if let Some(d) = disp.get(u, v) {
                points.push((v as f64, d as f64));
            }
        }
    }
    if points.len() < params.min_inliers.max(2) {
        return Err(Error::FitFailed(format!(
            "{} valid points in the lower half",
            points.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, f64, f64)> = None;
    for _ in 0..params.iterations {
        let p = points[rng.gen_range(0..points.len())];
        let q = points[rng.gen_range(0..points.len())];
        if p.0 == q.0 {
            continue;
        }
        let a = (q.1 - p.1) / (q.0 - p.0);
        if a <= 0.0 {
            continue;
        }
        let c = p.1 - a * p.0;
        let count = points
            .iter()
            .filter(|&&(v, d)| (d - (a * v + c)).abs() <= params.inlier_threshold)
            .count();
        if best.map_or(true, |b| count > b.0) {
            best = Some((count, a, c));
        }
    }
    let (count, a, c) = best.ok_or_else(|| Error::FitFailed("no rising line sampled".into()))?;
    if count < params.min_inliers {
        return Err(Error::FitFailed(format!(
            "best consensus {count} < {}",
            params.min_inliers
        )));
    }
    let inliers: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(v, d)| (d - (a * v + c)).abs() <= params.inlier_threshold)
        .collect();
    let (a, c) = fit_line(&inliers).ok_or_else(|| Error::FitFailed("degenerate consensus".into()))?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::FitFailed(format!("refit slope {a} is not positive")));
    }
    let fit = GroundPlane {
        alpha: a,
        v_horizon: -c / a,
    };
    if !(fit.v_horizon < disp.height as f64) {
        return Err(Error::FitFailed(format!(
            "horizon {} below the image",
            fit.v_horizon
        )));
    }
    Ok(match prev {
        Some(p) => p.blend(&fit, params.blend),
        None => fit,
    })
}

/// Ground point `(x, z)` in meters under pixel `(u, v)`.
pub fn bev_project(rig: &CameraRig, plane: &GroundPlane, u: f64, v: f64) -> Result<(f64, f64)> {
    let d = plane.ground_expect(v);
    if d <= 0.0 {
        return Err(Error::ProjectionUndefined {
            v,
            v_horizon: plane.v_horizon,
        });
    }
    let z = rig.focal * rig.baseline / d;
    Ok(((u - rig.cx) * z / rig.focal, z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub cell: f64,
}

impl Default for BevGridSpec {
    fn default() -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            z_min: 5.0,
            z_max: 45.0,
            cell: 0.1,
        }
    }
}

impl BevGridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.z_min < self.z_max && self.cell > 0.0) {
            return Err(Error::arg(format!("invalid BEV grid {self:?}")));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.cell).round() as usize
    }

    pub fn nz(&self) -> usize {
        ((self.z_max - self.z_min) / self.cell).round() as usize
    }

    /// Flat cell index (`iz * nx + ix`) of a metric point, if inside the grid.
    pub fn cell_of(&self, x: f64, z: f64) -> Option<usize> {
        let ix = ((x - self.x_min) / self.cell).floor();
        let iz = ((z - self.z_min) / self.cell).floor();
        if ix < 0.0 || iz < 0.0 {
            return None;
        }
        let (ix, iz) = (ix as usize, iz as usize);
        (ix < self.nx() && iz < self.nz()).then(|| iz * self.nx() + ix)
    }
}

/// Per-pixel BEV cell lookup for fixed image size, rig, plane and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BevProjection {
    pub width: usize,
    pub height: usize,
    pub spec: BevGridSpec,
    /// Cell of each pixel, row-major; `None` above the horizon or outside the grid.
    pub cell: Vec<Option<u32>>,
}

impl BevProjection {
    pub fn new(rig: &CameraRig, plane: &GroundPlane, width: usize, height: usize, spec: &BevGridSpec) -> Self {
        let mut cell = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                cell.push(
                    bev_project(rig, plane, u as f64, v as f64)
                        .ok()
                        .and_then(|(x, z)| spec.cell_of(x, z))
                        .map(|c| c as u32),
                );
            }
        }
        Self {
            width,
            height,
            spec: *spec,
            cell,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.spec.nx() * self.spec.nz()
    }

    /// Projects a mask: each cell takes the label of the lowest image row landing in it;
    /// within that row OBSTACLE beats FREE. IGNORE pixels are not projected and empty cells
    /// stay IGNORE.
    pub fn rasterize(&self, mask: &LabelMask) -> BevGrid {
        let n = self.cell_count();
        let mut labels = vec![Label::Ignore; n];
        let mut row = vec![usize::MAX; n];
        for v in 0..self.height {
            for u in 0..self.width {
                let Some(c) = self.cell[v * self.width + u] else { continue };
                let c = c as usize;
                let l = mask.get(u, v);
                if l == Label::Ignore {
                    continue;
                }
                if row[c] == usize::MAX || v > row[c] {
                    row[c] = v;
                    labels[c] = l;
                } else if v == row[c] && l == Label::Obstacle {
                    labels[c] = l;
                }
            }
        }
        BevGrid {
            spec: self.spec,
            labels,
        }
    }
}

/// Top-down occupancy: one label per cell, `iz * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: BevGridSpec,
    pub labels: Vec<Label>,
}

impl BevGrid {
    pub fn get(&self, ix: usize, iz: usize) -> Label {
        self.labels[iz * self.spec.nx() + ix]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

pub fn bev_rasterize(
    mask: &LabelMask,
    rig: &CameraRig,
    plane: &GroundPlane,
    spec: &BevGridSpec,
) -> BevGrid {
    BevProjection::new(rig, plane, mask.width, mask.height, spec).rasterize(mask)
}
