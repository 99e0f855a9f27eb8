//! Exact per-column optimization.
//!
//! State `(t, c)` holds the best labeling of rows `t..H` whose uppermost segment has class
//! `c` and top row `t`. Rows are processed bottom-up and each state tries every bottom row
//! `b` of its segment, so a column costs `O(H^2)` transitions.
//!
//! Ties on total cost are broken by, in order: fewer segments; segment boundaries compared
//! bottom-up, preferring the lower boundary; classes compared bottom-up, GROUND first.

use std::cmp::Ordering;

use super::{all_invalid_labeling, column_costs, ColumnCosts, ColumnData, Segment, StixelClass, StixelColumnLabeling, StixelParams};
use crate::geometry::GroundPlane;

/// Ground may not start above the horizon row.
#[inline]
pub(super) fn ground_allowed(top: usize, plane: &GroundPlane) -> bool {
    top as f64 >= plane.v_horizon
}

/// Whether a segment can sit directly on top of a segment of class `lower`.
#[inline]
pub(super) fn may_stack(class: StixelClass, mu: f64, bottom: usize, lower: StixelClass, plane: &GroundPlane, params: &StixelParams) -> bool {
    match (class, lower) {
        (StixelClass::Ground, StixelClass::Ground) => false,
        (StixelClass::Obstacle, StixelClass::Ground) => mu >= plane.ground_expect(bottom as f64) - params.delta_grav,
        _ => true,
    }
}

#[inline]
pub(super) fn segment_cost(costs: &ColumnCosts, top: usize, bottom: usize, class: StixelClass) -> (f64, f64) {
    match class {
        StixelClass::Ground => (0.0, costs.ground(top, bottom)),
        StixelClass::Obstacle => costs.obstacle(top, bottom),
    }
}

#[inline]
pub(super) fn base_penalty(class: StixelClass, params: &StixelParams) -> f64 {
    match class {
        StixelClass::Ground => 0.0,
        StixelClass::Obstacle => params.beta_base,
    }
}

/// Order of two equal-cost labelings given bottom-up as `(v_top, class)`; `Less` wins.
pub(super) fn tie_order(a: &[(usize, StixelClass)], b: &[(usize, StixelClass)]) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| {
            a.iter()
                .zip(b)
                .map(|(x, y)| y.0.cmp(&x.0))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.iter().map(|x| x.1).cmp(b.iter().map(|y| y.1)))
}

#[derive(Debug, Clone, Copy)]
struct State {
    cost: f64,
    bottom: usize,
    mu: f64,
    seg_cost: f64,
    below: Option<StixelClass>,
}

type Table = Vec<[Option<State>; 2]>;

#[inline]
fn ci(c: StixelClass) -> usize {
    c as usize
}

/// Bottom-up `(v_top, class)` list of the labeling ending in state `(top, class)`.
fn path(table: &Table, top: usize, class: StixelClass) -> Vec<(usize, StixelClass)> {
    let mut out = Vec::new();
    let mut cur = Some((top, class));
    while let Some((t, c)) = cur {
        let s = table[t][ci(c)].expect("path through empty state");
        out.push((t, c));
        cur = s.below.map(|b| (s.bottom + 1, b));
    }
    out.reverse();
    out
}

/// Paths are only built on exact cost ties.
fn beats(cand: &State, cand_path: impl Fn() -> Vec<(usize, StixelClass)>, cur: &State, cur_path: impl Fn() -> Vec<(usize, StixelClass)>) -> bool {
    match cand.cost.partial_cmp(&cur.cost) {
        Some(Ordering::Less) => true,
        Some(Ordering::Greater) => false,
        _ => tie_order(&cand_path(), &cur_path()) == Ordering::Less,
    }
}

/// Minimum-cost labeling of one column.
pub fn stixel_dp(column: &ColumnData, plane: &GroundPlane, params: &StixelParams) -> StixelColumnLabeling {
    let costs = column_costs(column, plane, params);
    if !costs.any_valid() {
        return all_invalid_labeling(&costs, params);
    }
    let h = costs.height();
    let mut table: Table = vec![[None, None]; h + 1];

    for t in (0..h).rev() {
        for class in StixelClass::BOTH {
            if class == StixelClass::Ground && !ground_allowed(t, plane) {
                continue;
            }
            let mut best: Option<State> = None;
            for b in t..h {
                let (mu, seg_cost) = segment_cost(&costs, t, b, class);
                let mut offer = |cand: State, table: &Table| {
                    let better = match &best {
                        None => true,
                        Some(cur) => beats(
                            &cand,
                            || {
                                let mut p = cand.below.map_or_else(Vec::new, |c| path(table, cand.bottom + 1, c));
                                p.push((t, class));
                                p
                            },
                            cur,
                            || {
                                let mut p = cur.below.map_or_else(Vec::new, |c| path(table, cur.bottom + 1, c));
                                p.push((t, class));
                                p
                            },
                        ),
                    };
                    if better {
                        best = Some(cand);
                    }
                };
                if b + 1 == h {
                    let cand = State {
                        cost: seg_cost + base_penalty(class, params),
                        bottom: b,
                        mu,
                        seg_cost,
                        below: None,
                    };
                    offer(cand, &table);
                } else {
                    for lower in StixelClass::BOTH {
                        let Some(prev) = table[b + 1][ci(lower)] else { continue };
                        if !may_stack(class, mu, b, lower, plane, params) {
                            continue;
                        }
                        let cand = State {
                            cost: (prev.cost + params.beta_seg) + seg_cost,
                            bottom: b,
                            mu,
                            seg_cost,
                            below: Some(lower),
                        };
                        offer(cand, &table);
                    }
                }
            }
            table[t][ci(class)] = best;
        }
    }

    let mut winner: Option<StixelClass> = None;
    for class in StixelClass::BOTH {
        let Some(s) = table[0][ci(class)] else { continue };
        let take = match winner {
            None => true,
            Some(w) => {
                let cur = table[0][ci(w)].unwrap();
                beats(&s, || path(&table, 0, class), &cur, || path(&table, 0, w))
            }
        };
        if take {
            winner = Some(class);
        }
    }
    let top_class = winner.expect("an all-obstacle labeling always exists");

    let mut segments = Vec::new();
    let mut cur = Some((0usize, top_class));
    while let Some((t, c)) = cur {
        let s = table[t][ci(c)].unwrap();
        segments.push(Segment {
            v_bottom: s.bottom,
            v_top: t,
            class: c,
            mu: s.mu,
            cost: s.seg_cost,
        });
        cur = s.below.map(|b| (s.bottom + 1, b));
    }
    segments.reverse();
    StixelColumnLabeling {
        column: 0,
        width: 1,
        segments,
        total_cost: table[0][ci(top_class)].unwrap().cost,
        all_invalid: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[Option<f64>]) -> ColumnData {
        ColumnData::from_options(values)
    }

    #[test]
    fn column_on_ground_line_is_one_segment() {
        let plane = GroundPlane::new(1.0, 0.0);
        let c = col(&(0..12).map(|v| Some(v as f64)).collect::<Vec<_>>());
        let l = stixel_dp(&c, &plane, &StixelParams::default());
        assert_eq!(l.segments.len(), 1);
        assert_eq!((l.segments[0].v_bottom, l.segments[0].v_top), (11, 0));
        assert_eq!(l.segments[0].class, StixelClass::Ground);
        assert_eq!(l.total_cost, 0.0);
    }

    #[test]
    fn ground_then_obstacle() {
        // d(v) = 2 (v - 5): rows 11..6 expect 12, 10, 8, 6, 4, 2
        let plane = GroundPlane::new(2.0, 5.0);
        let values: Vec<Option<f64>> = (0..12)
            .map(|v| Some(if v >= 6 { plane.ground_expect(v as f64) } else { 12.0 }))
            .collect();
        let l = stixel_dp(&col(&values), &plane, &StixelParams::default());
        l.check_structure(12).unwrap();
        assert_eq!(l.segments.len(), 2);
        let (g, o) = (l.segments[0], l.segments[1]);
        assert_eq!((g.v_bottom, g.v_top, g.class), (11, 6, StixelClass::Ground));
        assert_eq!((o.v_bottom, o.v_top, o.class), (5, 0, StixelClass::Obstacle));
        assert_eq!(o.mu, 12.0);
        assert_eq!(l.total_cost, 8.0);
    }

    #[test]
    fn all_invalid_column_flagged() {
        let l = stixel_dp(&col(&[None; 12]), &GroundPlane::new(1.0, 0.0), &StixelParams::default());
        assert!(l.all_invalid);
        assert_eq!(l.segments.len(), 1);
        assert_eq!(l.segments[0].class, StixelClass::Obstacle);
        assert_eq!(l.segments[0].mu, 0.0);
        assert_eq!(l.total_cost, 12.0 * 1.0 + 4.0);
    }

    #[test]
    fn ground_stops_at_horizon() {
        // sky rows invalid above a horizon at row 4
        let plane = GroundPlane::new(1.0, 4.0);
        let values: Vec<Option<f64>> = (0..12).map(|v| (v > 4).then(|| plane.ground_expect(v as f64))).collect();
        let l = stixel_dp(&col(&values), &plane, &StixelParams::default());
        assert_eq!(l.segments[0].class, StixelClass::Ground);
        assert!(l.segments[0].v_top >= 4);
        assert_eq!(l.segments.last().unwrap().class, StixelClass::Obstacle);
    }

    #[test]
    fn tie_order_rules() {
        use StixelClass::*;
        assert_eq!(tie_order(&[(0, Ground)], &[(6, Ground), (0, Obstacle)]), Ordering::Less);
        assert_eq!(tie_order(&[(7, Ground), (0, Obstacle)], &[(6, Ground), (0, Obstacle)]), Ordering::Less);
        assert_eq!(tie_order(&[(6, Ground), (0, Obstacle)], &[(6, Obstacle), (0, Obstacle)]), Ordering::Less);
    }
}
