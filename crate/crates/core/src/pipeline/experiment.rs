//! The experiment matrix: every combination of mode, misalignment, delay, freeze depth and
//! checkpoint, evaluated on a test split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    apply_online, curve, evaluate_model, evaluate_online, sum_counts, train_offline_checkpoints, train_online_all,
    Evaluator, MisalignmentMode, OnlineSettings, SequenceData, TrainingMode,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{Confusion, PrCurve};
use crate::fcn::FcnModel;

pub const REPORT_HEADER: &str = "mode,misalign,delay,freeze,iters,fmax,ap";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub modes: Vec<TrainingMode>,
    pub misalignments: Vec<MisalignmentMode>,
    pub delays: Vec<usize>,
    pub freezes: Vec<usize>,
    /// Online checkpoints; empty means the configured budget of each mode.
    pub checkpoints: Vec<usize>,
    pub offline_iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub mode: TrainingMode,
    /// `None` for offline rows.
    pub misalignment: Option<MisalignmentMode>,
    pub delay: usize,
    pub freeze: usize,
    pub iterations: usize,
    pub counts: Vec<Confusion>,
    pub curve: PrCurve,
    /// Test sequences whose training sequence was unusable.
    pub missing: Vec<String>,
}

impl MatrixRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6}",
            self.mode,
            self.misalignment.map_or("NONE", |m| m.name()),
            self.delay,
            self.freeze,
            self.iterations,
            self.curve.f_max,
            self.curve.ap
        )
    }
}

/// Runs the matrix. Offline models train on `train` and evaluate on `test`; online models
/// train on and evaluate on `test`, tuning modes starting from the matching offline model.
pub fn run_experiment_matrix(
    train: &[SequenceData],
    test: &[SequenceData],
    spec: &MatrixSpec,
    cfg: &RunConfig,
) -> Result<Vec<MatrixRow>> {
    if test.is_empty() {
        return Err(Error::arg("experiment needs at least one test sequence"));
    }
    let evaluator = Evaluator::new(cfg);
    let mut offline: BTreeMap<TrainingMode, FcnModel> = BTreeMap::new();
    let mut needed: Vec<TrainingMode> = spec
        .modes
        .iter()
        .map(|&m| m.init_mode().unwrap_or(m))
        .filter(|m| !m.is_online())
        .collect();
    needed.sort();
    needed.dedup();
    for mode in needed {
        let model = train_offline_checkpoints(train, mode, cfg, spec.offline_iterations, &[], spec.seed)?
            .pop()
            .expect("one checkpoint")
            .1;
        offline.insert(mode, model);
    }

    let mut rows = Vec::new();
    for &mode in &spec.modes {
        if !mode.is_online() {
            let counts = evaluate_model(&offline[&mode], test, &evaluator)?;
            rows.push(MatrixRow {
                mode,
                misalignment: None,
                delay: 0,
                freeze: cfg.train.freeze_first,
                iterations: spec.offline_iterations,
                curve: curve(&counts),
                counts,
                missing: Vec::new(),
            });
            continue;
        }
        let init = mode.init_mode().map(|m| &offline[&m]);
        for &delay in &spec.delays {
            for &freeze in &spec.freezes {
                let mut settings = OnlineSettings::new(mode, cfg, spec.seed);
                settings.delay = delay;
                settings.freeze_first = freeze;
                settings.checkpoints = spec.checkpoints.clone();
                let models = train_online_all(test, &settings, init, cfg)?;
                let checkpoints: Vec<usize> = match models.iter().find_map(|m| m.as_ref().ok()) {
                    Some(cms) => cms.iter().map(|(k, _)| *k).collect(),
                    None => Vec::new(),
                };
                for &mis in &spec.misalignments {
                    let results = apply_online(test, &models, mis)?;
                    for &k in &checkpoints {
                        let (counts, missing) = evaluate_online(&results, test, k, &evaluator)?;
                        rows.push(MatrixRow {
                            mode,
                            misalignment: Some(mis),
                            delay,
                            freeze,
                            iterations: k,
                            curve: curve(&counts),
                            counts,
                            missing,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn matrix_csv(rows: &[MatrixRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn pick<'a>(rows: &'a [MatrixRow], mode: TrainingMode, mis: &[&str]) -> Vec<&'a MatrixRow> {
    let candidates: Vec<&MatrixRow> = rows
        .iter()
        .filter(|r| {
            r.mode == mode
                && r.delay == 0
                && r.freeze == if mode.is_online() { 0 } else { r.freeze }
                && r.misalignment.map_or(mis.is_empty(), |m| mis.contains(&m.name()))
        })
        .collect();
    let Some(last) = candidates.iter().map(|r| r.iterations).max() else {
        return Vec::new();
    };
    candidates.into_iter().filter(|r| r.iterations == last).collect()
}

/// Seven summary columns: offline self-supervised, then scratch and tuned models under
/// aligned, shifted and permuted data. Both shift directions pool into one column.
pub fn summary_columns(rows: &[MatrixRow]) -> Vec<(&'static str, Option<PrCurve>)> {
    let pooled = |sel: Vec<&MatrixRow>| {
        (!sel.is_empty()).then(|| curve(&sum_counts(sel.iter().map(|r| &r.counts))))
    };
    let shifted = ["SHIFT_PLUS_1", "SHIFT_MINUS_1"];
    vec![
        ("offline", pooled(pick(rows, TrainingMode::OffSelf, &[]))),
        ("scratch_aligned", pooled(pick(rows, TrainingMode::OnlScratch, &["ALIGNED"]))),
        ("scratch_shifted", pooled(pick(rows, TrainingMode::OnlScratch, &shifted))),
        ("scratch_permuted", pooled(pick(rows, TrainingMode::OnlScratch, &["PERMUTE"]))),
        ("tuned_aligned", pooled(pick(rows, TrainingMode::OnlTuneSelf, &["ALIGNED"]))),
        ("tuned_shifted", pooled(pick(rows, TrainingMode::OnlTuneSelf, &shifted))),
        ("tuned_permuted", pooled(pick(rows, TrainingMode::OnlTuneSelf, &["PERMUTE"]))),
    ]
}

pub fn summary_csv(rows: &[MatrixRow]) -> String {
    let mut s = String::from("column,fmax,ap\n");
    for (name, c) in summary_columns(rows) {
        match c {
            Some(c) => writeln!(s, "{name},{:.6},{:.6}", c.f_max, c.ap),
            None => writeln!(s, "{name},,"),
        }
        .expect("write to string");
    }
    s
}
