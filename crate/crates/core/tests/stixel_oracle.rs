//! DP segmentation against exhaustive search on short columns.

use freespace::geometry::GroundPlane;
use freespace::stixel::{brute_force_segment, stixel_dp, ColumnData, StixelClass, StixelParams, ORACLE_MAX_SEGMENTS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: usize = 12;

/// Ground rows near the line, obstacle runs at constant disparity, occasional holes.
fn random_column(rng: &mut ChaCha8Rng) -> (ColumnData, GroundPlane) {
    let plane = GroundPlane::new(rng.gen_range(0.3..2.0), rng.gen_range(-4.0..6.0));
    let top_obstacle = rng.gen_range(0..=H);
    let mu = rng.gen_range(0.0..12.0);
    let values: Vec<Option<f64>> = (0..H)
        .map(|v| {
            if rng.gen_bool(0.15) {
                return None;
            }
            let noise = rng.gen_range(-1.5..1.5);
            let d = if v < top_obstacle { mu } else { plane.ground_expect(v as f64) };
            Some((d + noise).max(0.05))
        })
        .collect();
    (ColumnData::from_options(&values), plane)
}

fn structured_columns() -> Vec<(ColumnData, GroundPlane)> {
    let plane = GroundPlane::new(1.0, 2.0);
    let ground = |v: usize| plane.ground_expect(v as f64).max(0.1);
    let mut out = Vec::new();
    let mut push = |f: &dyn Fn(usize) -> Option<f64>| {
        let values: Vec<Option<f64>> = (0..H).map(f).collect();
        out.push((ColumnData::from_options(&values), plane));
    };
    push(&|v| Some(ground(v)));
    push(&|_| None);
    push(&|_| Some(5.0));
    push(&|v| if v < 6 { Some(7.0) } else { Some(ground(v)) });
    push(&|v| if v < 6 { Some(3.0) } else { Some(ground(v)) });
    push(&|v| if v < 3 { None } else if v < 7 { Some(6.0) } else { Some(ground(v)) });
    push(&|v| if v < 4 { Some(2.0) } else if v < 8 { Some(8.0) } else { Some(ground(v)) });
    push(&|v| if v % 2 == 0 { None } else { Some(ground(v)) });
    push(&|v| if v >= 9 { Some(4.0) } else { Some(ground(v)) });
    push(&|v| if v < 2 { Some(0.5) } else { None });
    push(&|v| Some(ground(v) + 3.0));
    push(&|v| Some((ground(v) - 3.0).max(0.1)));
    push(&|v| if v == 5 { Some(20.0) } else { Some(ground(v)) });
    push(&|v| if v < 11 { Some(9.0) } else { Some(ground(v)) });
    push(&|v| Some(v as f64));
    push(&|v| Some((H - v) as f64));
    push(&|v| if v < 6 { None } else { Some(9.0) });
    push(&|v| if (4..8).contains(&v) { None } else { Some(ground(v)) });
    push(&|v| Some(if v < 4 { 1.0 } else if v < 8 { 5.0 } else { 9.0 }));
    push(&|v| if v < 10 { Some(ground(10)) } else { Some(ground(v)) });
    out
}

fn assert_equivalent(column: &ColumnData, plane: &GroundPlane, params: &StixelParams) {
    let dp = stixel_dp(column, plane, params);
    let oracle = brute_force_segment(column, plane, params, ORACLE_MAX_SEGMENTS).unwrap();
    assert!(
        (dp.total_cost - oracle.total_cost).abs() <= 1e-9,
        "cost {} vs {}",
        dp.total_cost,
        oracle.total_cost
    );
    assert_eq!(dp.segments, oracle.segments);
    assert_eq!(dp.all_invalid, oracle.all_invalid);
}

/// The DP may find cheaper labelings with more segments than the oracle allows; with the
/// default penalties no optimum here needs more than four.
#[test]
fn random_columns_match_oracle() {
    let params = StixelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let (column, plane) = random_column(&mut rng);
        assert!(stixel_dp(&column, &plane, &params).segments.len() <= ORACLE_MAX_SEGMENTS);
        assert_equivalent(&column, &plane, &params);
    }
}

#[test]
fn structured_columns_match_oracle() {
    let params = StixelParams::default();
    let cols = structured_columns();
    assert_eq!(cols.len(), 20);
    for (column, plane) in &cols {
        assert_equivalent(column, plane, &params);
        stixel_dp(column, plane, &params).check_structure(H).unwrap();
    }
}

#[test]
fn standing_obstacle_over_ground() {
    let plane = GroundPlane::new(1.0, 2.0);
    let values: Vec<Option<f64>> = (0..H)
        .map(|v| Some(if v < 6 { plane.ground_expect(6.0) } else { plane.ground_expect(v as f64) }))
        .collect();
    let l = stixel_dp(&ColumnData::from_options(&values), &plane, &StixelParams::default());
    let classes: Vec<_> = l.segments.iter().map(|s| (s.class, s.v_bottom, s.v_top)).collect();
    // row 6 fits both classes exactly; ties put the boundary lower
    assert_eq!(classes, vec![(StixelClass::Ground, 11, 7), (StixelClass::Obstacle, 6, 0)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_matches_oracle_under_varied_params(
        seed in any::<u64>(),
        sigma in 0.5f64..2.0,
        beta_seg in 2.0f64..12.0,
        beta_base in 0.0f64..8.0,
        delta in 0.5f64..4.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (column, plane) = random_column(&mut rng);
        let params = StixelParams { sigma, beta_seg, beta_base, delta_grav: delta, ..StixelParams::default() };
        let dp = stixel_dp(&column, &plane, &params);
        prop_assume!(dp.segments.len() <= ORACLE_MAX_SEGMENTS);
        let oracle = brute_force_segment(&column, &plane, &params, ORACLE_MAX_SEGMENTS).unwrap();
        prop_assert!((dp.total_cost - oracle.total_cost).abs() <= 1e-9);
        prop_assert_eq!(dp.segments, oracle.segments);
    }

    #[test]
    fn labelings_are_well_formed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (column, plane) = random_column(&mut rng);
        let params = StixelParams::default();
        let l = stixel_dp(&column, &plane, &params);
        l.check_structure(H).unwrap();
        for pair in l.segments.windows(2) {
            prop_assert!(!(pair[0].class == StixelClass::Ground && pair[1].class == StixelClass::Ground));
            if pair[0].class == StixelClass::Ground && pair[1].class == StixelClass::Obstacle {
                prop_assert!(pair[1].mu >= plane.ground_expect(pair[1].v_bottom as f64) - params.delta_grav);
            }
        }
        for s in &l.segments {
            if s.class == StixelClass::Ground {
                prop_assert!(s.v_top as f64 >= plane.v_horizon);
            }
        }
    }
}
