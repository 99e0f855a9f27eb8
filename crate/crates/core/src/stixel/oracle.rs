//! Exhaustive search over short labelings, used to check the DP.

use std::cmp::Ordering;

use super::dp::{base_penalty, may_stack, segment_cost, tie_order, ground_allowed};
use super::{all_invalid_labeling, column_costs, ColumnData, Segment, StixelClass, StixelColumnLabeling, StixelParams};
use crate::error::{Error, Result};
use crate::geometry::GroundPlane;

pub const ORACLE_MAX_ROWS: usize = 14;
pub const ORACLE_MAX_SEGMENTS: usize = 4;

/// Tries every boundary placement and class assignment with at most `max_segments`
/// segments, scoring and tie-breaking exactly as [`super::stixel_dp`] does.
pub fn brute_force_segment(
    column: &ColumnData,
    plane: &GroundPlane,
    params: &StixelParams,
    max_segments: usize,
) -> Result<StixelColumnLabeling> {
    let h = column.height();
    if h > ORACLE_MAX_ROWS || max_segments == 0 || max_segments > ORACLE_MAX_SEGMENTS {
        return Err(Error::arg(format!(
            "oracle limited to {ORACLE_MAX_ROWS} rows and 1..={ORACLE_MAX_SEGMENTS} segments, got {h} rows and {max_segments}"
        )));
    }
    let costs = column_costs(column, plane, params);
    if !costs.any_valid() {
        return Ok(all_invalid_labeling(&costs, params));
    }

    let mut best: Option<(f64, Vec<Segment>)> = None;
    let key = |segs: &[Segment]| segs.iter().map(|s| (s.v_top, s.class)).collect::<Vec<_>>();
    // cut mask bit i: boundary between rows i and i + 1
    for cuts in 0u32..(1 << (h - 1)) {
        let k = cuts.count_ones() as usize + 1;
        if k > max_segments {
            continue;
        }
        // bottom-up (v_bottom, v_top)
        let mut spans = Vec::with_capacity(k);
        let mut bottom = h - 1;
        for i in (0..h - 1).rev() {
            if cuts & (1 << i) != 0 {
                spans.push((bottom, i + 1));
                bottom = i;
            }
        }
        spans.push((bottom, 0));

        'classes: for assign in 0u32..(1 << k) {
            let mut segs: Vec<Segment> = Vec::with_capacity(k);
            let mut total = 0.0;
            for (j, &(b, t)) in spans.iter().enumerate() {
                let class = if assign & (1 << j) != 0 {
                    StixelClass::Obstacle
                } else {
                    StixelClass::Ground
                };
                if class == StixelClass::Ground && !ground_allowed(t, plane) {
                    continue 'classes;
                }
                let (mu, cost) = segment_cost(&costs, t, b, class);
                if let Some(lower) = segs.last() {
                    if !may_stack(class, mu, b, lower.class, plane, params) {
                        continue 'classes;
                    }
                    total = (total + params.beta_seg) + cost;
                } else {
                    total = cost + base_penalty(class, params);
                }
                segs.push(Segment {
                    v_bottom: b,
                    v_top: t,
                    class,
                    mu,
                    cost,
                });
            }
            let better = match &best {
                None => true,
                Some((c, cur)) => match total.partial_cmp(c) {
                    Some(Ordering::Less) => true,
                    Some(Ordering::Greater) => false,
                    _ => tie_order(&key(&segs), &key(cur)) == Ordering::Less,
                },
            };
            if better {
                best = Some((total, segs));
            }
        }
    }
    let (total_cost, segments) = best.ok_or_else(|| Error::arg("no admissible labeling within the segment limit"))?;
    Ok(StixelColumnLabeling {
        column: 0,
        width: 1,
        segments,
        total_cost,
        all_invalid: false,
    })
}
