//! Weak labeling, offline and online training, and the experiments built from them.
//!
//! Offline models train once on a training split. Online models train per test sequence on
//! the weak labels of its preceding frames, either from scratch or starting from an offline
//! model. Misalignment deliberately feeds a test sequence the frames of another sequence.

mod experiment;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{Confusion, FrameCells, PrCurve, PR_STEPS};
use crate::fcn::{infer_full, init_model, train_with_checkpoints, FcnModel, PatchPool, TrainConfig, NUM_LAYERS};
use crate::geometry::{fit_ground_plane, BevProjection, CameraRig, GroundPlane};
use crate::imgio::{
    discover_sequences, read_color_image, read_disparity, read_label_mask, ColorImage, ConfidenceMap, DisparityImage,
    LabelMask, Sequence, SequenceWarning, PRECEDING_FRAMES,
};
use crate::stixel::{labeling_to_mask, stixel_image};
use crate::synth::hash2;

pub use experiment::{
    matrix_csv, run_experiment_matrix, summary_columns, summary_csv, MatrixRow, MatrixSpec, REPORT_HEADER,
};

/// Largest number of newest preceding frames that may be withheld.
pub const MAX_DELAY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainingMode {
    OffMan,
    OffSelf,
    OffSelfAll,
    OnlScratch,
    OnlTuneMan,
    OnlTuneSelf,
}

impl TrainingMode {
    pub const ALL: [TrainingMode; 6] = [
        TrainingMode::OffMan,
        TrainingMode::OffSelf,
        TrainingMode::OffSelfAll,
        TrainingMode::OnlScratch,
        TrainingMode::OnlTuneMan,
        TrainingMode::OnlTuneSelf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::OffMan => "OFF_MAN",
            TrainingMode::OffSelf => "OFF_SELF",
            TrainingMode::OffSelfAll => "OFF_SELF_ALL",
            TrainingMode::OnlScratch => "ONL_SCRATCH",
            TrainingMode::OnlTuneMan => "ONL_TUNE_MAN",
            TrainingMode::OnlTuneSelf => "ONL_TUNE_SELF",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, TrainingMode::OnlScratch | TrainingMode::OnlTuneMan | TrainingMode::OnlTuneSelf)
    }

    /// Offline mode whose model a tuning mode starts from.
    pub fn init_mode(self) -> Option<TrainingMode> {
        match self {
            TrainingMode::OnlTuneMan => Some(TrainingMode::OffMan),
            TrainingMode::OnlTuneSelf => Some(TrainingMode::OffSelf),
            _ => None,
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    /// Accepts `OFF_SELF`, `off-self`, and for online modes the short `scratch`,
    /// `tune-man`, `tune-self`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let norm = match norm.as_str() {
            "SCRATCH" => "ONL_SCRATCH".to_string(),
            "TUNE_MAN" => "ONL_TUNE_MAN".to_string(),
            "TUNE_SELF" => "ONL_TUNE_SELF".to_string(),
            _ => norm,
        };
        TrainingMode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::arg(format!("unknown training mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MisalignmentMode {
    Aligned,
    ShiftPlus1,
    ShiftMinus1,
    Permute(u64),
}

impl MisalignmentMode {
    pub fn name(self) -> &'static str {
        match self {
            MisalignmentMode::Aligned => "ALIGNED",
            MisalignmentMode::ShiftPlus1 => "SHIFT_PLUS_1",
            MisalignmentMode::ShiftMinus1 => "SHIFT_MINUS_1",
            MisalignmentMode::Permute(_) => "PERMUTE",
        }
    }

    /// Parses `aligned`, `shift+1`/`shift-plus-1`, `shift-1`/`shift-minus-1`, `permute`;
    /// permutations take `seed`.
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Ok(match norm.as_str() {
            "ALIGNED" => MisalignmentMode::Aligned,
            "SHIFT_PLUS_1" | "SHIFT+1" | "SHIFT_PLUS" => MisalignmentMode::ShiftPlus1,
            "SHIFT_MINUS_1" | "SHIFT_1" | "SHIFT_MINUS" => MisalignmentMode::ShiftMinus1,
            "PERMUTE" => MisalignmentMode::Permute(seed),
            _ => return Err(Error::arg(format!("unknown misalignment {s:?}"))),
        })
    }

    /// `a[i]` is the sequence whose frames train the model evaluated on sequence `i`.
    pub fn assignment(self, n: usize) -> Vec<usize> {
        match self {
            MisalignmentMode::Aligned => (0..n).collect(),
            MisalignmentMode::ShiftPlus1 => (0..n).map(|i| (i + 1) % n).collect(),
            MisalignmentMode::ShiftMinus1 => (0..n).map(|i| (i + n - 1) % n).collect(),
            MisalignmentMode::Permute(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p: Vec<usize> = (0..n).collect();
                loop {
                    p.shuffle(&mut rng);
                    if n < 2 || p.iter().enumerate().any(|(i, &x)| i != x) {
                        return p;
                    }
                }
            }
        }
    }
}

impl fmt::Display for MisalignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inverse of an assignment permutation.
pub fn invert_assignment(a: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; a.len()];
    for (i, &x) in a.iter().enumerate() {
        inv[x] = i;
    }
    inv
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub image: ColorImage,
    pub disparity: DisparityImage,
}

/// A sequence held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub id: u32,
    pub name: String,
    /// Oldest first.
    pub preceding: Vec<FrameData>,
    pub annotated: FrameData,
    pub manual: Option<LabelMask>,
}

impl SequenceData {
    pub fn all_frames(&self) -> impl Iterator<Item = &FrameData> {
        self.preceding.iter().chain(std::iter::once(&self.annotated))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.annotated.image.dims()
    }
}

fn load_frame(color: &std::path::Path, disparity_path: &std::path::Path, scale: f32) -> Result<FrameData> {
    let image = read_color_image(color)?;
    let disparity = read_disparity(disparity_path, scale)?;
    if image.dims() != disparity.dims() {
        return Err(Error::arg(format!(
            "{} and {} differ in size",
            color.display(),
            disparity_path.display()
        )));
    }
    Ok(FrameData { image, disparity })
}

pub fn load_sequence(seq: &Sequence, scale: f32) -> Result<SequenceData> {
    let preceding = seq
        .preceding
        .iter()
        .map(|f| load_frame(&f.color, &f.disparity, scale))
        .collect::<Result<Vec<_>>>()?;
    let annotated = load_frame(&seq.annotated.color, &seq.annotated.disparity, scale)?;
    let manual = seq.manual_mask.as_ref().map(read_label_mask).transpose()?;
    Ok(SequenceData {
        id: seq.id,
        name: seq.name(),
        preceding,
        annotated,
        manual,
    })
}

/// Loads every complete sequence under `root`; incomplete ones come back as warnings.
pub fn load_dataset(root: impl AsRef<std::path::Path>, scale: f32) -> Result<(Vec<SequenceData>, Vec<SequenceWarning>)> {
    let set = discover_sequences(root)?;
    let data = set
        .sequences
        .iter()
        .map(|s| load_sequence(s, scale))
        .collect::<Result<Vec<_>>>()?;
    Ok((data, set.warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLabels {
    pub masks: Vec<LabelMask>,
    /// Plane used for each frame after blending or fallback.
    pub planes: Vec<GroundPlane>,
    pub fit_failures: usize,
}

/// Stixel masks for consecutive frames, with the ground plane tracked across them.
///
/// A failed fit reuses the previous frame's plane, or the configured default plane for
/// the first frame. The sequence is unusable if every fit fails.
pub fn generate_weak_labels(disparities: &[&DisparityImage], rig: &CameraRig, cfg: &RunConfig) -> Result<WeakLabels> {
    let mut prev: Option<GroundPlane> = None;
    let mut planes = Vec::with_capacity(disparities.len());
    let mut failures = 0;
    for d in disparities {
        let plane = match fit_ground_plane(d, &cfg.ransac, prev.as_ref()) {
            Ok(p) => p,
            Err(Error::FitFailed(_)) => {
                failures += 1;
                prev.unwrap_or_else(|| cfg.default_plane(rig))
            }
            Err(e) => return Err(e),
        };
        planes.push(plane);
        prev = Some(plane);
    }
    if failures == disparities.len() {
        return Err(Error::UnusableSequence(format!(
            "ground plane fit failed on all {failures} frames"
        )));
    }
    let masks = disparities
        .iter()
        .zip(&planes)
        .map(|(d, p)| labeling_to_mask(&stixel_image(d, p, &cfg.stixel)?, d.width, d.height))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakLabels {
        masks,
        planes,
        fit_failures: failures,
    })
}

/// Weak labels for all 11 frames of a sequence, planes chained oldest to newest.
pub fn sequence_weak_labels(seq: &SequenceData, cfg: &RunConfig) -> Result<WeakLabels> {
    let (w, h) = seq.dims();
    let rig = cfg.rig(w, h)?;
    let d: Vec<&DisparityImage> = seq.all_frames().map(|f| &f.disparity).collect();
    generate_weak_labels(&d, &rig, cfg)
}

/// Seed of the job training on sequence `seq_id`.
pub fn job_seed(global_seed: u64, seq_id: u32) -> u64 {
    hash2(global_seed, seq_id as u64)
}

fn train_config(cfg: &RunConfig, iterations: usize, seed: u64, freeze_first: usize, lr_scale: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.train.learning_rate * lr_scale,
        iterations,
        seed,
        freeze_first,
        ..cfg.train.clone()
    }
}

/// Models saved at each checkpoint, ascending.
pub type CheckpointModels = Vec<(usize, FcnModel)>;

fn train_checkpoints(init: FcnModel, pools: &[PatchPool], tc: &TrainConfig, checkpoints: &[usize]) -> Result<CheckpointModels> {
    let mut out = Vec::new();
    if tc.freeze_first >= NUM_LAYERS {
        // nothing can change; skip the work
        tc.validate()?;
        return Ok(checkpoints.iter().map(|&k| (k, init.clone())).collect());
    }
    train_with_checkpoints(init, pools, tc, checkpoints, |k, m| {
        out.push((k, m.clone()));
        Ok(())
    })?;
    Ok(out)
}

fn normalized_checkpoints(checkpoints: &[usize], iterations: usize) -> Vec<usize> {
    let mut c: Vec<usize> = if checkpoints.is_empty() {
        vec![iterations]
    } else {
        checkpoints.to_vec()
    };
    c.sort_unstable();
    c.dedup();
    c
}

/// Training pools of an offline mode.
///
/// `OFF_MAN` uses the manual masks of the annotated frames, `OFF_SELF` the weak labels of
/// the same frames, `OFF_SELF_ALL` the weak labels of all frames. Sequences without a
/// usable ground plane are skipped by the self-supervised modes.
pub fn offline_pools(data: &[SequenceData], mode: TrainingMode, cfg: &RunConfig) -> Result<Vec<PatchPool>> {
    let mut pools = Vec::new();
    for seq in data {
        match mode {
            TrainingMode::OffMan => {
                let mask = seq.manual.clone().ok_or_else(|| {
                    Error::arg(format!("{}/frame_{PRECEDING_FRAMES:02} has no manual mask", seq.name))
                })?;
                pools.push(PatchPool::Frame {
                    image: seq.annotated.image.clone(),
                    mask,
                });
            }
            TrainingMode::OffSelf | TrainingMode::OffSelfAll => {
                let weak = match sequence_weak_labels(seq, cfg) {
                    Ok(w) => w,
                    Err(Error::UnusableSequence(_)) => continue,
                    Err(e) => return Err(e),
                };
                let frames: Vec<&FrameData> = seq.all_frames().collect();
                let first = if mode == TrainingMode::OffSelf { PRECEDING_FRAMES } else { 0 };
                for k in first..frames.len() {
                    pools.push(PatchPool::Frame {
                        image: frames[k].image.clone(),
                        mask: weak.masks[k].clone(),
                    });
                }
            }
            _ => return Err(Error::arg(format!("{mode} is not an offline mode"))),
        }
    }
    if pools.is_empty() {
        return Err(Error::arg(format!("no usable training data for {mode}")));
    }
    Ok(pools)
}

/// Offline training, saving the model at each checkpoint (empty: only at `iterations`).
pub fn train_offline_checkpoints(
    data: &[SequenceData],
    mode: TrainingMode,
    cfg: &RunConfig,
    iterations: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<CheckpointModels> {
    let pools = offline_pools(data, mode, cfg)?;
    let checkpoints = normalized_checkpoints(checkpoints, iterations);
    let iterations = *checkpoints.last().expect("non-empty");
    let tc = offline_train_config(cfg, iterations, seed);
    train_checkpoints(init_model(seed), &pools, &tc, &checkpoints)
}

pub fn offline_train_config(cfg: &RunConfig, iterations: usize, seed: u64) -> TrainConfig {
    train_config(cfg, iterations, seed, cfg.train.freeze_first, 1.0)
}

/// Online training config for a job seed: learning rate scaled by the online multiplier.
pub fn online_train_config(cfg: &RunConfig, iterations: usize, seed: u64, freeze_first: usize) -> TrainConfig {
    train_config(cfg, iterations, seed, freeze_first, cfg.online.lr_multiplier)
}

/// Weak-label pools of a sequence's preceding frames, newest `delay` frames withheld.
pub fn online_pools(seq: &SequenceData, delay: usize, cfg: &RunConfig) -> Result<Vec<PatchPool>> {
    if delay > MAX_DELAY {
        return Err(Error::arg(format!("delay {delay} exceeds {MAX_DELAY} frames")));
    }
    let frames = &seq.preceding[..seq.preceding.len().saturating_sub(delay)];
    let (w, h) = seq.dims();
    let rig = cfg.rig(w, h)?;
    let d: Vec<&DisparityImage> = frames.iter().map(|f| &f.disparity).collect();
    let weak = generate_weak_labels(&d, &rig, cfg)?;
    Ok(frames
        .iter()
        .zip(weak.masks)
        .map(|(f, mask)| PatchPool::Frame {
            image: f.image.clone(),
            mask,
        })
        .collect())
}

pub fn train_offline(data: &[SequenceData], mode: TrainingMode, cfg: &RunConfig, iterations: usize, seed: u64) -> Result<FcnModel> {
    Ok(train_offline_checkpoints(data, mode, cfg, iterations, &[iterations], seed)?
        .pop()
        .expect("one checkpoint")
        .1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSettings {
    pub mode: TrainingMode,
    /// Newest preceding frames withheld from training.
    pub delay: usize,
    pub freeze_first: usize,
    pub iterations: usize,
    /// Iteration counts at which the model is evaluated; empty means only the end.
    pub checkpoints: Vec<usize>,
    pub seed: u64,
}

impl OnlineSettings {
    /// Defaults from the run config: scratch and tuning budgets differ.
    pub fn new(mode: TrainingMode, cfg: &RunConfig, seed: u64) -> Self {
        let iterations = if mode == TrainingMode::OnlScratch {
            cfg.online.scratch_iterations
        } else {
            cfg.online.tune_iterations
        };
        Self {
            mode,
            delay: 0,
            freeze_first: 0,
            iterations,
            checkpoints: Vec::new(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.mode.is_online() {
            return Err(Error::arg(format!("{} is not an online mode", self.mode)));
        }
        if self.delay > MAX_DELAY {
            return Err(Error::arg(format!("delay {} exceeds {MAX_DELAY} frames", self.delay)));
        }
        if self.freeze_first > NUM_LAYERS {
            return Err(Error::arg(format!("freeze_first {} exceeds {NUM_LAYERS}", self.freeze_first)));
        }
        Ok(())
    }
}

/// Trains on the weak labels of one sequence's preceding frames.
pub fn train_online(seq: &SequenceData, settings: &OnlineSettings, init: Option<&FcnModel>, cfg: &RunConfig) -> Result<CheckpointModels> {
    settings.validate()?;
    let seed = job_seed(settings.seed, seq.id);
    let start = match (settings.mode, init) {
        (TrainingMode::OnlScratch, _) => init_model(seed),
        (_, Some(m)) => m.clone(),
        (mode, None) => return Err(Error::arg(format!("{mode} needs an initial model"))),
    };
    let pools = online_pools(seq, settings.delay, cfg)?;
    let checkpoints = normalized_checkpoints(&settings.checkpoints, settings.iterations);
    let iterations = *checkpoints.last().expect("non-empty");
    let tc = online_train_config(cfg, iterations, seed, settings.freeze_first);
    train_checkpoints(start, &pools, &tc, &checkpoints)
}

/// Online models for every sequence, in data order. Unusable sequences carry their reason.
pub fn train_online_all(
    data: &[SequenceData],
    settings: &OnlineSettings,
    init: Option<&FcnModel>,
    cfg: &RunConfig,
) -> Result<Vec<std::result::Result<CheckpointModels, String>>> {
    data.par_iter()
        .map(|seq| match train_online(seq, settings, init, cfg) {
            Ok(m) => Ok(Ok(m)),
            Err(Error::UnusableSequence(msg)) => Ok(Err(format!("{}: {msg}", seq.name))),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineResult {
    pub test: String,
    pub train: String,
    /// Confidence on the test frame per checkpoint, or why the training sequence was unusable.
    pub maps: std::result::Result<Vec<(usize, ConfidenceMap)>, String>,
}

/// Applies per-sequence models to test sequences under a misalignment.
pub fn apply_online(
    data: &[SequenceData],
    models: &[std::result::Result<CheckpointModels, String>],
    misalignment: MisalignmentMode,
) -> Result<Vec<OnlineResult>> {
    let assign = misalignment.assignment(data.len());
    data.par_iter()
        .zip(assign.par_iter())
        .map(|(test, &a)| {
            let maps = match &models[a] {
                Ok(cms) => Ok(cms
                    .iter()
                    .map(|(k, m)| Ok((*k, infer_full(m, &test.annotated.image)?)))
                    .collect::<Result<Vec<_>>>()?),
                Err(reason) => Err(reason.clone()),
            };
            Ok(OnlineResult {
                test: test.name.clone(),
                train: data[a].name.clone(),
                maps,
            })
        })
        .collect()
}

/// Online training and inference for every sequence of `data`.
pub fn run_online(
    data: &[SequenceData],
    settings: &OnlineSettings,
    init: Option<&FcnModel>,
    misalignment: MisalignmentMode,
    cfg: &RunConfig,
) -> Result<Vec<OnlineResult>> {
    let models = train_online_all(data, settings, init, cfg)?;
    apply_online(data, &models, misalignment)
}

/// BEV evaluation of test frames under the config's rig and fallback plane.
#[derive(Debug, Clone)]
pub struct Evaluator {
    cfg: RunConfig,
}

impl Evaluator {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { cfg: cfg.clone() }
    }

    pub fn projection(&self, width: usize, height: usize) -> Result<BevProjection> {
        let rig = self.cfg.rig(width, height)?;
        Ok(BevProjection::new(&rig, &self.cfg.default_plane(&rig), width, height, &self.cfg.bev))
    }

    /// Per-threshold counts of one frame.
    pub fn frame_counts(&self, conf: &ConfidenceMap, gt: &LabelMask) -> Result<Vec<Confusion>> {
        let proj = self.projection(gt.width, gt.height)?;
        Ok(FrameCells::new(conf, gt, &proj)?.confusion_curve())
    }
}

pub fn sum_counts<'a>(counts: impl IntoIterator<Item = &'a Vec<Confusion>>) -> Vec<Confusion> {
    let mut total = vec![Confusion::default(); PR_STEPS];
    for c in counts {
        for (t, x) in total.iter_mut().zip(c) {
            *t += *x;
        }
    }
    total
}

fn manual_mask(seq: &SequenceData) -> Result<&LabelMask> {
    seq.manual
        .as_ref()
        .ok_or_else(|| Error::arg(format!("{} has no manual mask to evaluate against", seq.name)))
}

/// Counts of one model over the annotated frames of a test split.
pub fn evaluate_model(model: &FcnModel, test: &[SequenceData], evaluator: &Evaluator) -> Result<Vec<Confusion>> {
    let per: Vec<Vec<Confusion>> = test
        .par_iter()
        .map(|seq| evaluator.frame_counts(&infer_full(model, &seq.annotated.image)?, manual_mask(seq)?))
        .collect::<Result<_>>()?;
    Ok(sum_counts(&per))
}

/// Counts of online results at one checkpoint; sequences without a map are listed.
pub fn evaluate_online(
    results: &[OnlineResult],
    test: &[SequenceData],
    checkpoint: usize,
    evaluator: &Evaluator,
) -> Result<(Vec<Confusion>, Vec<String>)> {
    let mut per = Vec::new();
    let mut missing = Vec::new();
    for (r, seq) in results.iter().zip(test) {
        match &r.maps {
            Ok(maps) => {
                let (_, conf) = maps
                    .iter()
                    .find(|(k, _)| *k == checkpoint)
                    .ok_or_else(|| Error::arg(format!("no checkpoint {checkpoint} for {}", r.test)))?;
                per.push(evaluator.frame_counts(conf, manual_mask(seq)?)?);
            }
            Err(reason) => missing.push(reason.clone()),
        }
    }
    Ok((sum_counts(&per), missing))
}

pub fn curve(counts: &[Confusion]) -> PrCurve {
    PrCurve::from_confusions(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::Label;
    use crate::synth::{benchmark_rig, gen_sequence, BoxSpec, DisparityNoise, SceneSpec, Style};

    pub(crate) fn bench_config() -> RunConfig {
        RunConfig::parse("cx = 63.5\ncy = 40\n").unwrap()
    }

    #[test]
    fn assignments() {
        assert_eq!(MisalignmentMode::ShiftPlus1.assignment(3), vec![1, 2, 0]);
        assert_eq!(MisalignmentMode::ShiftMinus1.assignment(3), vec![2, 0, 1]);
        assert_eq!(MisalignmentMode::Aligned.assignment(3), vec![0, 1, 2]);
        let p = MisalignmentMode::Permute(7).assignment(5);
        assert_eq!(p, MisalignmentMode::Permute(7).assignment(5));
        assert_ne!(p, (0..5).collect::<Vec<_>>());
        let inv = invert_assignment(&p);
        assert!((0..5).all(|i| inv[p[i]] == i && p[inv[i]] == i));
        assert_eq!(MisalignmentMode::Permute(3).assignment(1), vec![0]);
    }

    #[test]
    fn permutation_never_identity() {
        for seed in 0..200 {
            let p = MisalignmentMode::Permute(seed).assignment(2);
            assert_eq!(p, vec![1, 0]);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("tune-self".parse::<TrainingMode>().unwrap(), TrainingMode::OnlTuneSelf);
        assert_eq!("OFF_SELF_ALL".parse::<TrainingMode>().unwrap(), TrainingMode::OffSelfAll);
        assert_eq!("off-man".parse::<TrainingMode>().unwrap(), TrainingMode::OffMan);
        assert!("offline".parse::<TrainingMode>().is_err());
        assert_eq!(MisalignmentMode::parse("permute", 4).unwrap(), MisalignmentMode::Permute(4));
        assert_eq!(MisalignmentMode::parse("shift-plus-1", 0).unwrap(), MisalignmentMode::ShiftPlus1);
    }

    /// Disagreements on rows whose ground depth is inside the evaluated range; the far
    /// rows just under the horizon carry sub-pixel disparity and are ambiguous.
    fn mismatches(a: &LabelMask, b: &LabelMask) -> Vec<(usize, usize, Label, Label)> {
        let cfg = bench_config();
        let rig = benchmark_rig();
        let plane = cfg.default_plane(&rig);
        let first = (0..a.height)
            .find(|&v| plane.ground_expect(v as f64) >= rig.focal * rig.baseline / cfg.bev.z_max)
            .unwrap();
        (first..a.height)
            .flat_map(|v| (0..a.width).map(move |u| (u, v)))
            .filter(|&(u, v)| a.get(u, v) != b.get(u, v))
            .map(|(u, v)| (u, v, a.get(u, v), b.get(u, v)))
            .collect()
    }

    fn scene(boxes: Vec<BoxSpec>) -> SceneSpec {
        let mut s = SceneSpec::random(benchmark_rig(), Style::A, DisparityNoise::NONE, 11);
        s.boxes = boxes;
        s
    }

    #[test]
    fn flat_sequence_weak_labels_free_below_horizon() {
        let frames = gen_sequence(&scene(vec![]), 0).unwrap();
        let d: Vec<&DisparityImage> = frames[..10].iter().map(|f| &f.disparity).collect();
        let cfg = bench_config();
        let weak = generate_weak_labels(&d, &benchmark_rig(), &cfg).unwrap();
        assert_eq!(weak.masks.len(), 10);
        assert_eq!(weak.fit_failures, 0);
        for (m, f) in weak.masks.iter().zip(&frames) {
            assert!(mismatches(m, &f.gt).is_empty(), "{:?}", &mismatches(m, &f.gt)[..5.min(mismatches(m, &f.gt).len())]);
            assert!(m.count(Label::Free) >= 128 * 53);
        }
    }

    #[test]
    fn box_sequence_weak_labels_match_truth() {
        let boxes = vec![BoxSpec {
            x: 0.5,
            z: 14.0,
            width: 2.0,
            height: 1.2,
            color: [90.0, 40.0, 40.0],
        }];
        let frames = gen_sequence(&scene(boxes), 0).unwrap();
        let d: Vec<&DisparityImage> = frames.iter().map(|f| &f.disparity).collect();
        let weak = generate_weak_labels(&d, &benchmark_rig(), &bench_config()).unwrap();
        for (m, f) in weak.masks.iter().zip(&frames) {
            let obstacle_below_horizon = (41..96)
                .flat_map(|v| (0..128).map(move |u| (u, v)))
                .filter(|&(u, v)| f.gt.get(u, v) == Label::Obstacle)
                .count();
            assert!(obstacle_below_horizon > 0);
            let bad = mismatches(m, &f.gt);
            assert!(bad.is_empty(), "{} differ, first {:?}", bad.len(), &bad[..5.min(bad.len())]);
        }
    }

    #[test]
    fn unusable_without_disparity() {
        let d = DisparityImage::invalid(128, 96);
        let err = generate_weak_labels(&[&d, &d], &benchmark_rig(), &bench_config()).unwrap_err();
        assert!(matches!(err, Error::UnusableSequence(_)));
    }
}
