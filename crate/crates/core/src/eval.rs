//! Birds-eye-view evaluation of confidence maps against ground-truth masks.
//!
//! A confidence map is thresholded in image space (`conf >= tau` is FREE), both masks are
//! projected onto the ground grid, and cells where either side is IGNORE are skipped.
//! Precision/recall refer to the FREE class.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BevGridSpec, BevProjection, CameraRig, GroundPlane};
use crate::imgio::{ColorImage, ConfidenceMap, Label, LabelMask};

/// Number of thresholds of a curve.
pub const PR_STEPS: usize = 256;

/// Recall levels averaged by [`average_precision`].
pub const AP_RECALL_LEVELS: usize = 11;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

impl Confusion {
    /// Counts one evaluated cell.
    pub fn record(&mut self, pred_free: bool, gt_free: bool) {
        match (pred_free, gt_free) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// `(precision, recall, f)`; precision is 1 with no positive prediction, recall 0 with
    /// no positive truth, and f is 0 when both are 0.
    pub fn scores(&self) -> (f64, f64, f64) {
        let p = if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let r = if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        (p, r, f_measure(p, r))
    }
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// The `k`-th of [`PR_STEPS`] evenly spaced thresholds over `[-1, 1]`.
pub fn threshold(k: usize) -> f64 {
    -1.0 + 2.0 * k as f64 / (PR_STEPS - 1) as f64
}

#[inline]
fn is_free(conf: f32, tau: f64) -> bool {
    conf as f64 >= tau
}

fn check_dims(conf: &ConfidenceMap, gt: &LabelMask, proj: &BevProjection) -> Result<()> {
    if conf.dims() != gt.dims() || gt.dims() != (proj.width, proj.height) {
        return Err(Error::arg(format!(
            "size mismatch: confidence {:?}, ground truth {:?}, projection {:?}",
            conf.dims(),
            gt.dims(),
            (proj.width, proj.height)
        )));
    }
    Ok(())
}

/// Cells of one frame reduced to what every threshold needs.
///
/// A thresholded map has no IGNORE pixels, so each cell's prediction comes from the lowest
/// image row landing in it, and that row is FREE at `tau` iff its smallest confidence is
/// `>= tau`. The cell therefore reduces to that minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCells {
    /// `(score, gt is FREE)` for every cell where both sides are defined.
    pub cells: Vec<(f32, bool)>,
}

impl FrameCells {
    pub fn new(conf: &ConfidenceMap, gt: &LabelMask, proj: &BevProjection) -> Result<Self> {
        check_dims(conf, gt, proj)?;
        let gt_grid = proj.rasterize(gt);
        let n = proj.cell_count();
        let mut row = vec![usize::MAX; n];
        let mut score = vec![f32::INFINITY; n];
        for v in 0..proj.height {
            for u in 0..proj.width {
                let Some(c) = proj.cell[v * proj.width + u] else { continue };
                let c = c as usize;
                let s = conf.get(u, v);
                if row[c] == usize::MAX || v > row[c] {
                    row[c] = v;
                    score[c] = s;
                } else if v == row[c] {
                    score[c] = score[c].min(s);
                }
            }
        }
        let cells = (0..n)
            .filter(|&c| row[c] != usize::MAX && gt_grid.labels[c] != Label::Ignore)
            .map(|c| (score[c], gt_grid.labels[c] == Label::Free))
            .collect();
        Ok(Self { cells })
    }

    pub fn confusion(&self, tau: f64) -> Confusion {
        let mut c = Confusion::default();
        for &(s, gt_free) in &self.cells {
            c.record(is_free(s, tau), gt_free);
        }
        c
    }

    /// Confusion at every threshold of [`threshold`].
    pub fn confusion_curve(&self) -> Vec<Confusion> {
        let taus: Vec<f64> = (0..PR_STEPS).map(threshold).collect();
        // free_from[k]: cells that are FREE for thresholds 0..k
        let mut free_gt = vec![0u64; PR_STEPS + 1];
        let mut free_obst = vec![0u64; PR_STEPS + 1];
        let (mut total_gt, mut total_obst) = (0u64, 0u64);
        for &(s, gt_free) in &self.cells {
            let k = taus.partition_point(|&t| is_free(s, t));
            if gt_free {
                free_gt[k] += 1;
                total_gt += 1;
            } else {
                free_obst[k] += 1;
                total_obst += 1;
            }
        }
        // cells with k > i are FREE at threshold i
        let mut out = vec![Confusion::default(); PR_STEPS];
        let (mut tp, mut fp) = (0u64, 0u64);
        for i in (0..PR_STEPS).rev() {
            tp += free_gt[i + 1];
            fp += free_obst[i + 1];
            out[i] = Confusion {
                tp,
                fp,
                fn_: total_gt - tp,
                tn: total_obst - fp,
            };
        }
        out
    }
}

/// Confusion counts over the BEV grid at threshold `tau`.
pub fn confusion_at_threshold(
    conf: &ConfidenceMap,
    gt: &LabelMask,
    rig: &CameraRig,
    plane: &GroundPlane,
    spec: &BevGridSpec,
    tau: f64,
) -> Result<Confusion> {
    let proj = BevProjection::new(rig, plane, gt.width, gt.height, spec);
    check_dims(conf, gt, &proj)?;
    let mut pred = LabelMask::filled(conf.width, conf.height, Label::Obstacle);
    for v in 0..conf.height {
        for u in 0..conf.width {
            if is_free(conf.get(u, v), tau) {
                pred.set(u, v, Label::Free);
            }
        }
    }
    let p = proj.rasterize(&pred);
    let g = proj.rasterize(gt);
    let mut c = Confusion::default();
    for (pl, gl) in p.labels.iter().zip(&g.labels) {
        if *pl != Label::Ignore && *gl != Label::Ignore {
            c.record(*pl == Label::Free, *gl == Label::Free);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub f_max: f64,
    pub ap: f64,
}

impl PrCurve {
    pub fn from_points(points: Vec<PrPoint>) -> Self {
        let f_max = points.iter().map(|p| p.f).fold(0.0, f64::max);
        let ap = average_precision(&points);
        Self { points, f_max, ap }
    }

    /// Curve from `(precision, recall)` pairs, thresholds numbered in order.
    pub fn from_pr(pairs: &[(f64, f64)]) -> Self {
        Self::from_points(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(precision, recall))| PrPoint {
                    threshold: i as f64,
                    precision,
                    recall,
                    f: f_measure(precision, recall),
                })
                .collect(),
        )
    }

    pub fn from_confusions(counts: &[Confusion]) -> Self {
        Self::from_points(
            counts
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let (precision, recall, f) = c.scores();
                    PrPoint {
                        threshold: threshold(k),
                        precision,
                        recall,
                        f,
                    }
                })
                .collect(),
        )
    }

    /// CSV with the grid and AP definition in `#` header lines.
    pub fn to_csv(&self, spec: &BevGridSpec) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# bev x_min={} x_max={} z_min={} z_max={} cell={}",
            spec.x_min, spec.x_max, spec.z_min, spec.z_max, spec.cell
        );
        let _ = writeln!(out, "# ap=11-point interpolated precision at recall 0,0.1,...,1");
        let _ = writeln!(out, "# {}", self.summary());
        out.push_str("threshold,precision,recall,f\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.threshold, p.precision, p.recall, p.f);
        }
        out
    }

    pub fn summary(&self) -> String {
        format!("fmax={:.6},ap={:.6}", self.f_max, self.ap)
    }
}

/// 11-point interpolated AP: the mean over `r = 0, 0.1, .., 1` of the best precision among
/// points with recall `>= r` (0 when there is none).
pub fn average_precision(points: &[PrPoint]) -> f64 {
    (0..AP_RECALL_LEVELS)
        .map(|k| {
            let r = k as f64 / (AP_RECALL_LEVELS - 1) as f64;
            points
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / AP_RECALL_LEVELS as f64
}

/// One evaluated frame.
#[derive(Debug, Clone, Copy)]
pub struct EvalFrame<'a> {
    pub conf: &'a ConfidenceMap,
    pub gt: &'a LabelMask,
    pub projection: &'a BevProjection,
}

/// Counts summed over all frames per threshold, then turned into a curve.
pub fn pr_curve(frames: &[EvalFrame<'_>]) -> Result<PrCurve> {
    let per_frame: Vec<Vec<Confusion>> = frames
        .par_iter()
        .map(|f| FrameCells::new(f.conf, f.gt, f.projection).map(|c| c.confusion_curve()))
        .collect::<Result<_>>()?;
    let mut total = vec![Confusion::default(); PR_STEPS];
    for counts in &per_frame {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += *c;
        }
    }
    Ok(PrCurve::from_confusions(&total))
}

const TP_COLOR: [u8; 3] = [0, 255, 0];
const FN_COLOR: [u8; 3] = [0, 0, 255];
const FP_COLOR: [u8; 3] = [255, 0, 0];

/// Image-space diagnostic: TP green, FN blue, FP red at 50% over the source.
pub fn render_overlay(image: &ColorImage, conf: &ConfidenceMap, gt: &LabelMask, tau: f64) -> Result<ColorImage> {
    if image.dims() != conf.dims() || conf.dims() != gt.dims() {
        return Err(Error::arg("overlay inputs differ in size"));
    }
    let mut out = image.clone();
    for v in 0..image.height {
        for u in 0..image.width {
            let pred_free = is_free(conf.get(u, v), tau);
            let tint = match (gt.get(u, v), pred_free) {
                (Label::Free, true) => TP_COLOR,
                (Label::Free, false) => FN_COLOR,
                (Label::Obstacle, true) => FP_COLOR,
                _ => continue,
            };
            let src = image.pixel(u, v);
            let blended = std::array::from_fn(|i| ((src[i] as u16 + tint[i] as u16 + 1) / 2) as u8);
            out.set_pixel(u, v, blended);
        }
    }
    Ok(out)
}
