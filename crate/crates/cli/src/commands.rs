use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use freespace::config::RunConfig;
use freespace::eval::{render_overlay, PrCurve};
use freespace::fcn::{infer_full, train, LossPoint};
use freespace::imgio::{
    read_color_image, read_confidence_map, read_disparity, read_label_mask, read_model, write_color_image,
    write_confidence_map, write_disparity, write_label_mask, write_model, PRECEDING_FRAMES,
};
use freespace::pipeline::{
    self, evaluate_online, job_seed, load_dataset, matrix_csv, offline_pools, offline_train_config, online_pools,
    online_train_config, run_experiment_matrix, sum_counts, summary_csv, Evaluator, MatrixRow, MatrixSpec,
    MisalignmentMode, OnlineSettings, SequenceData, TrainingMode, REPORT_HEADER,
};
use freespace::stereo::block_match;
use freespace::stixel::{labeling_to_mask, stixel_image, write_segments_csv};
use freespace::synth::gen_benchmark;

use crate::DataArgs;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parses `0-3,5,7-8` into ids.
fn parse_ids(s: &str) -> Result<BTreeSet<u32>> {
    let mut ids = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty range {part:?}");
                }
                ids.extend(a..=b);
            }
            None => {
                ids.insert(part.parse().with_context(|| format!("bad sequence id {part:?}"))?);
            }
        }
    }
    Ok(ids)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().with_context(|| format!("bad number {p:?}")))
        .collect()
}

fn load_data(data: &DataArgs) -> Result<(Vec<SequenceData>, RunConfig)> {
    let cfg = load_config(data.config.as_deref())?;
    let (seqs, warnings) = load_dataset(&data.dataset, cfg.disparity_scale)
        .with_context(|| format!("loading dataset {}", data.dataset.display()))?;
    for w in &warnings {
        eprintln!("warning: {w:?}");
    }
    if seqs.is_empty() {
        bail!("no complete sequences under {}", data.dataset.display());
    }
    Ok((seqs, cfg))
}

fn select(seqs: &[SequenceData], ids: Option<&str>) -> Result<Vec<SequenceData>> {
    let Some(ids) = ids else {
        return Ok(seqs.to_vec());
    };
    let ids = parse_ids(ids)?;
    let out: Vec<SequenceData> = seqs.iter().filter(|s| ids.contains(&s.id)).cloned().collect();
    let found: BTreeSet<u32> = out.iter().map(|s| s.id).collect();
    if let Some(missing) = ids.difference(&found).next() {
        bail!("sequence {missing} not found in dataset");
    }
    Ok(out)
}

fn loss_csv(trace: &[LossPoint]) -> String {
    let mut s = String::from("iteration,mean_loss\n");
    for p in trace {
        writeln!(s, "{},{:.9}", p.iteration, p.mean_loss).expect("write to string");
    }
    s
}

pub fn synth_gen(out: &Path, sequences: usize, shift_at: usize, seed: u64) -> Result<()> {
    let plan = gen_benchmark(out, sequences, shift_at, seed)?;
    println!("wrote {} sequences to {}", plan.len(), out.display());
    Ok(())
}

pub fn stereo_match(
    left: &Path,
    right: &Path,
    out: &Path,
    max_disp: Option<usize>,
    window: Option<usize>,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mut params = cfg.stereo;
    if let Some(d) = max_disp {
        params.max_disparity = d;
    }
    if let Some(w) = window {
        params.window = w;
    }
    let disp = block_match(&read_color_image(left)?, &read_color_image(right)?, &params)?;
    write_disparity(&disp, out)?;
    println!("valid={}", disp.valid_count());
    Ok(())
}

pub fn stixel_run(disparity: &Path, config: Option<&Path>, out_mask: &Path, out_segments: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let disp = read_disparity(disparity, cfg.disparity_scale)?;
    let weak = pipeline::generate_weak_labels(&[&disp], &cfg.rig(disp.width, disp.height)?, &cfg);
    let plane = match weak {
        Ok(w) => w.planes[0],
        Err(freespace::Error::UnusableSequence(_)) => {
            eprintln!("warning: ground plane fit failed, using the configured plane");
            cfg.default_plane(&cfg.rig(disp.width, disp.height)?)
        }
        Err(e) => return Err(e.into()),
    };
    let labelings = stixel_image(&disp, &plane, &cfg.stixel)?;
    write_label_mask(&labeling_to_mask(&labelings, disp.width, disp.height)?, out_mask)?;
    if let Some(p) = out_segments {
        write_segments_csv(&labelings, p)?;
    }
    println!("plane alpha={:.6} v_horizon={:.6}", plane.alpha, plane.v_horizon);
    Ok(())
}

pub fn fcn_train(
    data: &DataArgs,
    mode: &str,
    sequences: Option<&str>,
    iterations: Option<usize>,
    seed: u64,
    out: &Path,
    loss_trace: Option<&Path>,
) -> Result<()> {
    let mode: TrainingMode = mode.parse()?;
    if mode.is_online() {
        bail!("{mode} is an online mode; use `fcn tune` or `run-online`");
    }
    let (seqs, cfg) = load_data(data)?;
    let seqs = select(&seqs, sequences)?;
    let pools = offline_pools(&seqs, mode, &cfg)?;
    let tc = offline_train_config(&cfg, iterations.unwrap_or(cfg.train.iterations), seed);
    let (model, trace) = train(freespace::fcn::init_model(seed), &pools, &tc)?;
    write_model(&model, out)?;
    if let Some(p) = loss_trace {
        write_text(p, &loss_csv(&trace))?;
    }
    Ok(())
}

pub struct TuneOptions {
    pub iterations: Option<usize>,
    pub freeze: usize,
    pub delay: usize,
    pub seed: u64,
}

pub fn fcn_tune(
    data: &DataArgs,
    init: &Path,
    sequence: u32,
    opts: TuneOptions,
    out: &Path,
    loss_trace: Option<&Path>,
) -> Result<()> {
    let (seqs, cfg) = load_data(data)?;
    let seq = select(&seqs, Some(&sequence.to_string()))?.remove(0);
    let model = read_model(init)?;
    let pools = online_pools(&seq, opts.delay, &cfg)?;
    let tc = online_train_config(
        &cfg,
        opts.iterations.unwrap_or(cfg.online.tune_iterations),
        job_seed(opts.seed, seq.id),
        opts.freeze,
    );
    let (model, trace) = train(model, &pools, &tc)?;
    write_model(&model, out)?;
    if let Some(p) = loss_trace {
        write_text(p, &loss_csv(&trace))?;
    }
    Ok(())
}

pub fn fcn_infer(model: &Path, image: &Path, out: &Path) -> Result<()> {
    let conf = infer_full(&read_model(model)?, &read_color_image(image)?)?;
    write_confidence_map(&conf, out)?;
    Ok(())
}

pub struct RunOnlineOptions<'a> {
    pub data: &'a DataArgs,
    pub mode: &'a str,
    pub init: Option<&'a Path>,
    pub misalign: &'a str,
    pub delay: usize,
    pub freeze: usize,
    pub iterations: Option<usize>,
    pub checkpoints: Option<&'a str>,
    pub sequences: Option<&'a str>,
    pub seed: u64,
    pub out: &'a Path,
    pub pred_dir: Option<&'a Path>,
}

pub fn run_online(o: RunOnlineOptions<'_>) -> Result<()> {
    let mode: TrainingMode = o.mode.parse()?;
    if !mode.is_online() {
        bail!("{mode} is not an online mode");
    }
    let misalignment = MisalignmentMode::parse(o.misalign, o.seed)?;
    let (seqs, cfg) = load_data(o.data)?;
    let seqs = select(&seqs, o.sequences)?;
    let init = match (mode, o.init) {
        (TrainingMode::OnlScratch, _) => None,
        (_, Some(p)) => Some(read_model(p)?),
        (_, None) => bail!("{mode} needs --init"),
    };
    let mut settings = OnlineSettings::new(mode, &cfg, o.seed);
    settings.delay = o.delay;
    settings.freeze_first = o.freeze;
    if let Some(n) = o.iterations {
        settings.iterations = n;
    }
    if let Some(c) = o.checkpoints {
        settings.checkpoints = parse_list(c)?;
    }
    let results = pipeline::run_online(&seqs, &settings, init.as_ref(), misalignment, &cfg)?;

    let evaluator = Evaluator::new(&cfg);
    let mut checkpoints: Vec<usize> = if settings.checkpoints.is_empty() {
        vec![settings.iterations]
    } else {
        settings.checkpoints.clone()
    };
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut report = format!("{REPORT_HEADER}\n");
    for &k in &checkpoints {
        let (counts, missing) = evaluate_online(&results, &seqs, k, &evaluator)?;
        for m in &missing {
            eprintln!("warning: no model for {m}");
        }
        let row = MatrixRow {
            mode,
            misalignment: Some(misalignment),
            delay: o.delay,
            freeze: o.freeze,
            iterations: k,
            curve: PrCurve::from_confusions(&counts),
            counts,
            missing,
        };
        report.push_str(&row.csv_line());
        report.push('\n');
    }
    write_text(o.out, &report)?;
    print!("{report}");

    if let Some(dir) = o.pred_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let last = *checkpoints.last().expect("non-empty");
        for r in &results {
            if let Ok(maps) = &r.maps {
                if let Some((_, conf)) = maps.iter().find(|(k, _)| *k == last) {
                    write_confidence_map(conf, dir.join(format!("{}.conf.pgm", r.test)))?;
                }
            }
        }
    }
    Ok(())
}

/// `<dir>/<name><suffix>` if present, else `<dir>/<name>/frame_10<suffix>`.
fn find_file(dir: &Path, name: &str, suffix: &str) -> Option<PathBuf> {
    let flat = dir.join(format!("{name}{suffix}"));
    if flat.is_file() {
        return Some(flat);
    }
    let nested = dir.join(name).join(format!("frame_{PRECEDING_FRAMES:02}{suffix}"));
    nested.is_file().then_some(nested)
}

pub fn eval(
    pred_dir: &Path,
    gt_dir: &Path,
    config: Option<&Path>,
    out: &Path,
    overlay_dir: Option<&Path>,
    images: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mut names: Vec<String> = fs::read_dir(pred_dir)
        .with_context(|| format!("reading {}", pred_dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".conf.pgm").map(str::to_string))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no *.conf.pgm files in {}", pred_dir.display());
    }
    let evaluator = Evaluator::new(&cfg);
    let mut per = Vec::new();
    let mut frames = Vec::new();
    for name in &names {
        let conf = read_confidence_map(pred_dir.join(format!("{name}.conf.pgm")))?;
        let gt_path = find_file(gt_dir, name, ".gt.pgm")
            .with_context(|| format!("no ground truth for {name} in {}", gt_dir.display()))?;
        let gt = read_label_mask(gt_path)?;
        per.push(evaluator.frame_counts(&conf, &gt)?);
        frames.push((name, conf, gt));
    }
    let curve = PrCurve::from_confusions(&sum_counts(&per));
    write_text(out, &curve.to_csv(&cfg.bev))?;
    println!("{}", curve.summary());

    if let Some(dir) = overlay_dir {
        let images = images.context("--overlay-dir needs --images")?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let tau = curve
            .points
            .iter()
            .find(|p| p.f == curve.f_max)
            .map_or(0.0, |p| p.threshold);
        for (name, conf, gt) in &frames {
            let path = find_file(images, name, ".ppm").with_context(|| format!("no image for {name}"))?;
            let overlay = render_overlay(&read_color_image(path)?, conf, gt, tau)?;
            write_color_image(&overlay, dir.join(format!("{name}.overlay.ppm")))?;
        }
    }
    Ok(())
}

pub struct ExperimentOptions<'a> {
    pub data: &'a DataArgs,
    pub train: &'a str,
    pub test: &'a str,
    pub modes: &'a str,
    pub misalign: &'a str,
    pub delays: &'a str,
    pub freezes: &'a str,
    pub checkpoints: Option<&'a str>,
    pub offline_iterations: usize,
    pub seed: u64,
    pub out: &'a Path,
    pub table: Option<&'a Path>,
}

pub fn experiment(o: ExperimentOptions<'_>) -> Result<()> {
    let (seqs, cfg) = load_data(o.data)?;
    let train_set = select(&seqs, Some(o.train))?;
    let test_set = select(&seqs, Some(o.test))?;
    let spec = MatrixSpec {
        modes: o
            .modes
            .split(',')
            .map(|m| m.parse())
            .collect::<freespace::Result<Vec<TrainingMode>>>()?,
        misalignments: o
            .misalign
            .split(',')
            .map(|m| MisalignmentMode::parse(m, o.seed))
            .collect::<freespace::Result<Vec<_>>>()?,
        delays: parse_list(o.delays)?,
        freezes: parse_list(o.freezes)?,
        checkpoints: o.checkpoints.map(parse_list).transpose()?.unwrap_or_default(),
        offline_iterations: o.offline_iterations,
        seed: o.seed,
    };
    let rows = run_experiment_matrix(&train_set, &test_set, &spec, &cfg)?;
    let report = matrix_csv(&rows);
    write_text(o.out, &report)?;
    print!("{report}");
    if let Some(p) = o.table {
        write_text(p, &summary_csv(&rows))?;
    }
    Ok(())
}
