//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so it can print a report and exit nonzero.
//! The training criteria use the full iteration budgets and take several minutes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use freespace::config::RunConfig;
use freespace::eval::{pr_curve, Confusion, EvalFrame, PrCurve};
use freespace::fcn::{
    extract_patch, forward_patch, grad_check, infer_grid, init_model, FcnModel, Patch, GRAD_CHECK_EPS,
};
use freespace::geometry::{BevGridSpec, BevProjection, GroundPlane};
use freespace::imgio::{ColorImage, ConfidenceMap, Label, LabelMask};
use freespace::pipeline::{
    apply_online, evaluate_model, evaluate_online, load_dataset, train_offline, train_online_all, CheckpointModels,
    Evaluator, MisalignmentMode, OnlineSettings, SequenceData, TrainingMode,
};
use freespace::stixel::{brute_force_segment, stixel_dp, ColumnData, StixelParams, ORACLE_MAX_SEGMENTS};
use freespace::synth::{benchmark_rig, gen_benchmark};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BENCHMARK_SEED: u64 = 42;
const OFFLINE_SEED: u64 = 1;
const ONLINE_SEED: u64 = 7;
const OFFLINE_ITERATIONS: usize = 10_000;
const EARLY_CHECKPOINT: usize = 500;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    let o = Outcome { id, name, pass, detail };
    println!(
        "criterion {} [{}] {}: {}",
        o.id,
        o.name,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o
}

// 1. stixel DP against exhaustive search

const H: usize = 12;

fn random_column(rng: &mut ChaCha8Rng) -> (ColumnData, GroundPlane) {
    let plane = GroundPlane::new(rng.gen_range(0.3..2.0), rng.gen_range(-4.0..6.0));
    let top_obstacle = rng.gen_range(0..=H);
    let mu = rng.gen_range(0.0..12.0);
    let values: Vec<Option<f64>> = (0..H)
        .map(|v| {
            if rng.gen_bool(0.15) {
                return None;
            }
            let d = if v < top_obstacle { mu } else { plane.ground_expect(v as f64) };
            Some((d + rng.gen_range(-1.5..1.5)).max(0.05))
        })
        .collect();
    (ColumnData::from_options(&values), plane)
}

fn structured_columns() -> Vec<(ColumnData, GroundPlane)> {
    let plane = GroundPlane::new(1.0, 2.0);
    let g = |v: usize| plane.ground_expect(v as f64).max(0.1);
    let makers: Vec<Box<dyn Fn(usize) -> Option<f64>>> = vec![
        Box::new(move |v| Some(g(v))),
        Box::new(|_| None),
        Box::new(|_| Some(5.0)),
        Box::new(move |v| Some(if v < 6 { 7.0 } else { g(v) })),
        Box::new(move |v| Some(if v < 6 { 3.0 } else { g(v) })),
        Box::new(move |v| if v < 3 { None } else { Some(if v < 7 { 6.0 } else { g(v) }) }),
        Box::new(move |v| Some(if v < 4 { 2.0 } else if v < 8 { 8.0 } else { g(v) })),
        Box::new(move |v| (v % 2 == 1).then(|| g(v))),
        Box::new(move |v| Some(if v >= 9 { 4.0 } else { g(v) })),
        Box::new(|v| (v < 2).then_some(0.5)),
        Box::new(move |v| Some(g(v) + 3.0)),
        Box::new(move |v| Some((g(v) - 3.0).max(0.1))),
        Box::new(move |v| Some(if v == 5 { 20.0 } else { g(v) })),
        Box::new(move |v| Some(if v < 11 { 9.0 } else { g(v) })),
        Box::new(|v| Some(v as f64)),
        Box::new(|v| Some((H - v) as f64)),
        Box::new(|v| (v >= 6).then_some(9.0)),
        Box::new(move |v| (!(4..8).contains(&v)).then(|| g(v))),
        Box::new(|v| Some(if v < 4 { 1.0 } else if v < 8 { 5.0 } else { 9.0 })),
        Box::new(move |v| Some(if v < 10 { g(10) } else { g(v) })),
    ];
    makers
        .iter()
        .map(|f| (ColumnData::from_options(&(0..H).map(f).collect::<Vec<_>>()), plane))
        .collect()
}

fn criterion_stixel_oracle() -> Outcome {
    let start = Instant::now();
    let params = StixelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut columns: Vec<(ColumnData, GroundPlane)> = (0..200).map(|_| random_column(&mut rng)).collect();
    columns.extend(structured_columns());
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for (col, plane) in &columns {
        let dp = stixel_dp(col, plane, &params);
        let oracle = brute_force_segment(col, plane, &params, ORACLE_MAX_SEGMENTS).expect("oracle runs");
        worst = worst.max((dp.total_cost - oracle.total_cost).abs());
        if (dp.total_cost - oracle.total_cost).abs() > 1e-9 || dp.segments != oracle.segments {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        1,
        "stixel oracle equivalence",
        mismatches == 0 && secs < 60.0,
        format!(
            "{} columns, {mismatches} mismatches, max cost diff {worst:.2e}, {secs:.1}s",
            columns.len()
        ),
    )
}

// 2. gradient check

fn random_patch(rng: &mut ChaCha8Rng) -> Patch {
    Patch {
        pixels: (0..16 * 16 * 3).map(|_| rng.gen::<u8>() as f64 / 127.5 - 1.0).collect(),
        pos: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        target: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
    }
}

/// Seeded weights with small random biases, so no unit sits exactly on a relu kink.
fn random_model(seed: u64, rng: &mut ChaCha8Rng) -> FcnModel {
    let mut m = init_model(seed);
    for layer in &mut m.layers {
        for b in &mut layer.bias {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    m
}

fn criterion_grad_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for draw in 0..20 {
        let model = random_model(draw, &mut rng);
        let patch = random_patch(&mut rng);
        let r = grad_check(&model, &patch, patch.target, GRAD_CHECK_EPS, draw).expect("grad check runs");
        worst = worst.max(r.max_rel_error);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        2,
        "gradient correctness",
        worst < 1e-3 && secs < 30.0,
        format!("20 draws x 5 layers, max relative error {worst:.2e}, {secs:.1}s"),
    )
}

// 3. patch/full equivalence

fn criterion_patch_full() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut cells = 0;
    for k in 0..5 {
        let model = init_model(100 + k);
        let img = ColorImage::new(32, 32, (0..32 * 32 * 3).map(|_| rng.gen()).collect()).expect("image");
        let grid = infer_grid(&model, &img).expect("grid");
        for i in 0..grid.rows {
            for j in 0..grid.cols {
                let patch = extract_patch(&img, 2 * j + 7, 2 * i + 7, 1.0).expect("patch");
                let (score, _) = forward_patch(&model, &patch).expect("forward");
                worst = worst.max((grid.get(i, j) - score).abs());
                cells += 1;
            }
        }
    }
    outcome(
        3,
        "patch/full equivalence",
        worst < 1e-5,
        format!("5 images, {cells} grid cells, max difference {worst:.2e}"),
    )
}

// 4. metric hand examples

fn criterion_metrics() -> Outcome {
    let mut failures = Vec::new();
    let curve = PrCurve::from_pr(&[(1.0, 0.5), (0.8, 0.8), (0.5, 1.0)]);
    let f: Vec<f64> = curve.points.iter().map(|p| p.f).collect();
    if (f[0] - 2.0 / 3.0).abs() > 1e-12 || (f[1] - 0.8).abs() > 1e-12 || (f[2] - 2.0 / 3.0).abs() > 1e-12 {
        failures.push(format!("F values {f:?}"));
    }
    if (curve.f_max - 0.8).abs() > 1e-12 {
        failures.push(format!("f_max {}", curve.f_max));
    }
    let single = PrCurve::from_pr(&[(1.0, 0.5)]);
    if (single.ap - 6.0 / 11.0).abs() > 1e-12 {
        failures.push(format!("single-point ap {}", single.ap));
    }
    let ones = PrCurve::from_pr(&(0..=10).map(|i| (1.0, i as f64 / 10.0)).collect::<Vec<_>>());
    if ones.ap != 1.0 {
        failures.push(format!("P=1 ap {}", ones.ap));
    }
    let mut c = Confusion::default();
    for (p, g) in [(true, true), (true, false), (false, true), (false, false)] {
        c.record(p, g);
    }
    if (c.tp, c.fp, c.fn_, c.tn) != (1, 1, 1, 1) {
        failures.push(format!("four-cell counts {c:?}"));
    }
    // perfect classifier through the BEV path
    let rig = benchmark_rig();
    let plane = GroundPlane::from_camera_height(&rig, 1.5);
    let proj = BevProjection::new(&rig, &plane, 128, 96, &BevGridSpec::default());
    let mut gt = LabelMask::filled(128, 96, Label::Free);
    let mut conf = ConfidenceMap::filled(128, 96, 1.0);
    for v in 0..96 {
        for u in 80..128 {
            gt.set(u, v, Label::Obstacle);
            conf.values[v * 128 + u] = -1.0;
        }
    }
    let perfect = pr_curve(&[EvalFrame {
        conf: &conf,
        gt: &gt,
        projection: &proj,
    }])
    .expect("curve");
    if perfect.f_max != 1.0 || perfect.ap != 1.0 {
        failures.push(format!("perfect classifier {}", perfect.summary()));
    }
    let pass = failures.is_empty();
    outcome(
        4,
        "metric unit suite",
        pass,
        if pass {
            "f_max 0.800, ap 6/11, P=1 ap 1, 4-cell counts, perfect classifier 1/1".into()
        } else {
            failures.join("; ")
        },
    )
}

// 5-8. benchmark experiments

struct Bench {
    cfg: RunConfig,
    evaluator: Evaluator,
    /// All style A.
    plain: Vec<SequenceData>,
    /// Style B from sequence 4 on.
    shifted: Vec<SequenceData>,
}

fn fmax(counts: &[Confusion]) -> f64 {
    PrCurve::from_confusions(counts).f_max
}

fn log(msg: &str, start: Instant) {
    eprintln!("[{:7.1}s] {msg}", start.elapsed().as_secs_f64());
}

fn build_bench(root: &Path) -> Bench {
    let plain_dir = root.join("plain");
    let shifted_dir = root.join("shifted");
    gen_benchmark(&plain_dir, 8, 8, BENCHMARK_SEED).expect("generate plain benchmark");
    gen_benchmark(&shifted_dir, 8, 4, BENCHMARK_SEED).expect("generate shifted benchmark");
    let cfg = RunConfig::load(plain_dir.join("benchmark.cfg")).expect("benchmark config");
    let (plain, _) = load_dataset(&plain_dir, cfg.disparity_scale).expect("load plain");
    let (shifted, _) = load_dataset(&shifted_dir, cfg.disparity_scale).expect("load shifted");
    assert_eq!(plain.len(), 8);
    assert_eq!(shifted.len(), 8);
    // the unshifted halves are the same data, so one offline model serves both
    assert!(plain[..4] == shifted[..4]);
    Bench {
        evaluator: Evaluator::new(&cfg),
        cfg,
        plain,
        shifted,
    }
}

struct OnlineRuns {
    /// (mode, misalignment name, checkpoint) -> fmax
    fmax: BTreeMap<(TrainingMode, &'static str, usize), f64>,
}

fn online_fmax(
    bench: &Bench,
    test: &[SequenceData],
    models: &[Result<CheckpointModels, String>],
    misalignment: MisalignmentMode,
    checkpoint: usize,
) -> f64 {
    let results = apply_online(test, models, misalignment).expect("apply online models");
    let (counts, missing) = evaluate_online(&results, test, checkpoint, &bench.evaluator).expect("evaluate");
    for m in missing {
        eprintln!("warning: no online model for {m}");
    }
    fmax(&counts)
}

fn run_online_mode(
    bench: &Bench,
    test: &[SequenceData],
    mode: TrainingMode,
    init: Option<&FcnModel>,
    freeze_first: usize,
    start: Instant,
) -> Vec<Result<CheckpointModels, String>> {
    let mut s = OnlineSettings::new(mode, &bench.cfg, ONLINE_SEED);
    s.freeze_first = freeze_first;
    s.checkpoints = vec![EARLY_CHECKPOINT, s.iterations];
    log(
        &format!("{mode} freeze {freeze_first}: {} iterations x {} sequences", s.iterations, test.len()),
        start,
    );
    train_online_all(test, &s, init, &bench.cfg).expect("online training")
}

fn benchmark_criteria(start: Instant) -> Vec<Outcome> {
    let tmp = tempfile::tempdir().expect("tempdir");
    let bench = build_bench(tmp.path());
    log("benchmarks generated", start);
    let train = &bench.plain[..4];
    let test_plain = &bench.plain[4..];
    let test_shifted = &bench.shifted[4..];
    let mut out = Vec::new();

    // 5
    log("offline OFF_MAN", start);
    let t5 = Instant::now();
    let off_man = train_offline(train, TrainingMode::OffMan, &bench.cfg, OFFLINE_ITERATIONS, OFFLINE_SEED).expect("OFF_MAN");
    log("offline OFF_SELF", start);
    let off_self = train_offline(train, TrainingMode::OffSelf, &bench.cfg, OFFLINE_ITERATIONS, OFFLINE_SEED).expect("OFF_SELF");
    let f_man = fmax(&evaluate_model(&off_man, test_plain, &bench.evaluator).expect("eval"));
    let f_self = fmax(&evaluate_model(&off_self, test_plain, &bench.evaluator).expect("eval"));
    let secs5 = t5.elapsed().as_secs_f64();
    out.push(outcome(
        5,
        "offline self-supervised vs manual",
        (f_self - f_man).abs() <= 0.03 && secs5 < 15.0 * 60.0,
        format!("Fmax OFF_SELF {f_self:.4}, OFF_MAN {f_man:.4}, |diff| {:.4} <= 0.03, {secs5:.0}s", (f_self - f_man).abs()),
    ));

    // 6, 7, 8 on the shifted test split
    let f_off = fmax(&evaluate_model(&off_self, test_shifted, &bench.evaluator).expect("eval"));
    let scratch = run_online_mode(&bench, test_shifted, TrainingMode::OnlScratch, None, 0, start);
    let tune = run_online_mode(&bench, test_shifted, TrainingMode::OnlTuneSelf, Some(&off_self), 0, start);
    let tune4 = run_online_mode(&bench, test_shifted, TrainingMode::OnlTuneSelf, Some(&off_self), 4, start);
    let tune5 = run_online_mode(&bench, test_shifted, TrainingMode::OnlTuneSelf, Some(&off_self), 5, start);

    let mut runs = OnlineRuns { fmax: BTreeMap::new() };
    let permute = MisalignmentMode::Permute(ONLINE_SEED);
    let scratch_end = bench.cfg.online.scratch_iterations;
    let tune_end = bench.cfg.online.tune_iterations;
    for (mode, models, end) in [
        (TrainingMode::OnlScratch, &scratch, scratch_end),
        (TrainingMode::OnlTuneSelf, &tune, tune_end),
    ] {
        for mis in [MisalignmentMode::Aligned, MisalignmentMode::ShiftPlus1, MisalignmentMode::ShiftMinus1, permute] {
            for k in [EARLY_CHECKPOINT, end] {
                runs.fmax.insert((mode, mis.name(), k), online_fmax(&bench, test_shifted, models, mis, k));
            }
        }
    }
    let get = |m, mis, k| runs.fmax[&(m, mis, k)];
    let tune_aligned = get(TrainingMode::OnlTuneSelf, "ALIGNED", tune_end);
    let tune_perm = get(TrainingMode::OnlTuneSelf, "PERMUTE", tune_end);
    let scr_aligned = get(TrainingMode::OnlScratch, "ALIGNED", scratch_end);
    let scr_perm = get(TrainingMode::OnlScratch, "PERMUTE", scratch_end);
    eprintln!("summary on the shifted test split (Fmax):");
    eprintln!("  offline OFF_SELF {f_off:.4}");
    for ((m, mis, k), f) in &runs.fmax {
        eprintln!("  {m} {mis} @{k}: {f:.4}");
    }
    out.push(outcome(
        6,
        "online tuning under domain shift",
        tune_aligned >= f_off + 0.02 && tune_perm < tune_aligned && scr_perm < scr_aligned,
        format!(
            "TUNE_SELF {tune_aligned:.4} >= OFF_SELF {f_off:.4} + 0.02; PERMUTE < ALIGNED: scratch {scr_perm:.4} < {scr_aligned:.4}, tune {tune_perm:.4} < {tune_aligned:.4}"
        ),
    ));

    let tune_early = get(TrainingMode::OnlTuneSelf, "ALIGNED", EARLY_CHECKPOINT);
    let scr_early = get(TrainingMode::OnlScratch, "ALIGNED", EARLY_CHECKPOINT);
    out.push(outcome(
        7,
        "convergence trend",
        tune_early >= scr_early,
        format!("at {EARLY_CHECKPOINT} iterations: TUNE_SELF {tune_early:.4} >= SCRATCH {scr_early:.4}"),
    ));

    let f4 = online_fmax(&bench, test_shifted, &tune4, MisalignmentMode::Aligned, tune_end);
    let f5 = online_fmax(&bench, test_shifted, &tune5, MisalignmentMode::Aligned, tune_end);
    out.push(outcome(
        8,
        "freeze trend",
        f4 >= f5 && (f4 - tune_aligned).abs() <= 0.05,
        format!(
            "freeze 4 {f4:.4} >= freeze 5 {f5:.4}; |freeze 4 - freeze 0 {tune_aligned:.4}| = {:.4} <= 0.05",
            (f4 - tune_aligned).abs()
        ),
    ));
    out
}

// 9. CLI determinism

fn cli_commands() -> Vec<Vec<&'static str>> {
    let cfg = "ds/benchmark.cfg";
    vec![
        vec!["synth", "gen", "--out", "ds", "--sequences", "4", "--shift-at", "2", "--seed", "42"],
        vec![
            "stereo", "match", "--left", "ds/seq000/frame_10.ppm", "--right", "ds/seq000/frame_10.right.ppm",
            "--out", "disp.pgm", "--max-disp", "32",
        ],
        vec![
            "stixel", "run", "--disparity", "ds/seq000/frame_10.dmap.pgm", "--config", cfg, "--out-mask",
            "mask.pgm", "--out-segments", "segments.csv",
        ],
        vec![
            "fcn", "train", "--dataset", "ds", "--config", cfg, "--mode", "off-self", "--sequences", "0-1",
            "--iterations", "60", "--seed", "3", "--out", "off.fcn", "--loss-trace", "loss.csv",
        ],
        vec![
            "fcn", "tune", "--dataset", "ds", "--config", cfg, "--init", "off.fcn", "--sequence", "2",
            "--iterations", "30", "--seed", "3", "--out", "tuned.fcn", "--loss-trace", "tune_loss.csv",
        ],
        vec!["fcn", "infer", "--model", "tuned.fcn", "--image", "ds/seq002/frame_10.ppm", "--out", "infer.conf.pgm"],
        vec![
            "run-online", "--dataset", "ds", "--config", cfg, "--mode", "tune-self", "--init", "off.fcn",
            "--misalign", "permute", "--seed", "7", "--iterations", "30", "--checkpoints", "10,30",
            "--sequences", "2-3", "--out", "online.csv", "--pred-dir", "pred",
        ],
        vec![
            "eval", "--pred-dir", "pred", "--gt-dir", "ds", "--config", cfg, "--out", "curve.csv",
            "--overlay-dir", "overlays", "--images", "ds",
        ],
        vec![
            "experiment", "--dataset", "ds", "--config", cfg, "--train", "0-1", "--test", "2-3", "--modes",
            "off-self,scratch,tune-self", "--misalign", "aligned,permute", "--checkpoints", "10,20",
            "--offline-iterations", "20", "--seed", "1", "--out", "matrix.csv", "--table", "table.csv",
        ],
    ]
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).expect("read dir").flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).expect("prefix").to_path_buf(), fs::read(&p).expect("read"));
            }
        }
    }
    out
}

fn run_cli_suite(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    cli_commands()
        .iter()
        .map(|args| {
            let out = Command::new(env!("CARGO_BIN_EXE_freespace"))
                .args(args)
                .current_dir(dir)
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{} failed: {}", args[..2].join(" "), String::from_utf8_lossy(&out.stderr)));
            }
            Ok(out.stdout)
        })
        .collect()
}

fn criterion_cli_determinism() -> Outcome {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let (ra, rb) = (run_cli_suite(a.path()), run_cli_suite(b.path()));
    let (sa, sb) = match (ra, rb) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return outcome(9, "CLI determinism", false, e),
    };
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let stdout_same = sa == sb;
    outcome(
        9,
        "CLI determinism",
        differing.is_empty() && stdout_same && !fa.is_empty(),
        format!(
            "{} commands, {} output files, {} differ{}",
            cli_commands().len(),
            fa.len(),
            differing.len(),
            if stdout_same { "" } else { ", stdout differs" }
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut results = vec![
        criterion_stixel_oracle(),
        criterion_grad_check(),
        criterion_patch_full(),
        criterion_metrics(),
    ];
    results.extend(benchmark_criteria(start));
    results.push(criterion_cli_determinism());
    results.sort_by_key(|o| o.id);

    println!("\nacceptance summary ({:.0}s):", start.elapsed().as_secs_f64());
    for o in &results {
        println!("  {} {:<36} {}", o.id, o.name, if o.pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|o| !o.pass).count();
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
