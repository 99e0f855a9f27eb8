//! `freespace`: stereo matching, stixel weak labels, FCN training and BEV evaluation.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "freespace", version, about = "Self-supervised free-space detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic benchmark generation.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Block-matching stereo.
    #[command(subcommand)]
    Stereo(StereoCmd),
    /// Stixel segmentation of a disparity map.
    #[command(subcommand)]
    Stixel(StixelCmd),
    /// Train, tune or apply the classifier.
    #[command(subcommand)]
    Fcn(FcnCmd),
    /// Per-sequence online training, inference and evaluation.
    RunOnline(RunOnlineArgs),
    /// BEV precision/recall evaluation of confidence maps.
    Eval(EvalArgs),
    /// Full experiment matrix over a train/test split.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Write a synthetic benchmark in the dataset layout.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        /// First sequence index rendered in the shifted style.
        #[arg(long, default_value_t = 4)]
        shift_at: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum StereoCmd {
    /// Disparity map from a rectified pair.
    Match {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_disp: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StixelCmd {
    /// Ground/obstacle mask and segment list of one disparity map.
    Run {
        #[arg(long)]
        disparity: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_mask: PathBuf,
        #[arg(long)]
        out_segments: Option<PathBuf>,
    },
}

/// Dataset and split shared by training commands.
#[derive(Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FcnCmd {
    /// Offline training on a set of sequences.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// off-man, off-self or off-self-all.
        #[arg(long, default_value = "off-self")]
        mode: String,
        /// Sequence ids to train on, e.g. `0-3` or `0,2,5`; default all.
        #[arg(long)]
        sequences: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// CSV of iteration,mean_loss.
        #[arg(long)]
        loss_trace: Option<PathBuf>,
    },
    /// Continue training a model on the weak labels of one sequence's preceding frames.
    Tune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        init: PathBuf,
        /// Sequence id.
        #[arg(long)]
        sequence: u32,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        freeze: usize,
        #[arg(long, default_value_t = 0)]
        delay: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss_trace: Option<PathBuf>,
    },
    /// Confidence map of one image.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunOnlineArgs {
    #[command(flatten)]
    data: DataArgs,
    /// scratch, tune-man or tune-self.
    #[arg(long)]
    mode: String,
    /// Starting model for tuning modes.
    #[arg(long)]
    init: Option<PathBuf>,
    /// aligned, shift-plus-1, shift-minus-1 or permute.
    #[arg(long, default_value = "aligned")]
    misalign: String,
    #[arg(long, default_value_t = 0)]
    delay: usize,
    #[arg(long, default_value_t = 0)]
    freeze: usize,
    #[arg(long)]
    iterations: Option<usize>,
    /// Comma-separated iteration counts to report.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Sequence ids to run on; default all.
    #[arg(long)]
    sequences: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write `<sequence>.conf.pgm` for the last checkpoint.
    #[arg(long)]
    pred_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of `<name>.conf.pgm` confidence maps.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory of `<name>.gt.pgm` masks, or a dataset with `<name>/frame_10.gt.pgm`.
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Write `<name>.overlay.ppm` at the F-max threshold; images come from `--images`.
    #[arg(long)]
    overlay_dir: Option<PathBuf>,
    /// Directory of `<name>.ppm`, or a dataset with `<name>/frame_10.ppm`.
    #[arg(long)]
    images: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "0-3")]
    train: String,
    #[arg(long, default_value = "4-7")]
    test: String,
    #[arg(long, default_value = "off-self,scratch,tune-self")]
    modes: String,
    #[arg(long, default_value = "aligned,shift-plus-1,shift-minus-1,permute")]
    misalign: String,
    #[arg(long, default_value = "0")]
    delays: String,
    #[arg(long, default_value = "0")]
    freezes: String,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    offline_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Seven-column summary CSV.
    #[arg(long)]
    table: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(SynthCmd::Gen {
            out,
            sequences,
            shift_at,
            seed,
        }) => commands::synth_gen(&out, sequences, shift_at, seed),
        Command::Stereo(StereoCmd::Match {
            left,
            right,
            out,
            max_disp,
            window,
            config,
        }) => commands::stereo_match(&left, &right, &out, max_disp, window, config.as_deref()),
        Command::Stixel(StixelCmd::Run {
            disparity,
            config,
            out_mask,
            out_segments,
        }) => commands::stixel_run(&disparity, config.as_deref(), &out_mask, out_segments.as_deref()),
        Command::Fcn(FcnCmd::Train {
            data,
            mode,
            sequences,
            iterations,
            seed,
            out,
            loss_trace,
        }) => commands::fcn_train(&data, &mode, sequences.as_deref(), iterations, seed, &out, loss_trace.as_deref()),
        Command::Fcn(FcnCmd::Tune {
            data,
            init,
            sequence,
            iterations,
            freeze,
            delay,
            seed,
            out,
            loss_trace,
        }) => commands::fcn_tune(
            &data,
            &init,
            sequence,
            commands::TuneOptions {
                iterations,
                freeze,
                delay,
                seed,
            },
            &out,
            loss_trace.as_deref(),
        ),
        Command::Fcn(FcnCmd::Infer { model, image, out }) => commands::fcn_infer(&model, &image, &out),
        Command::RunOnline(a) => commands::run_online(commands::RunOnlineOptions {
            data: &a.data,
            mode: &a.mode,
            init: a.init.as_deref(),
            misalign: &a.misalign,
            delay: a.delay,
            freeze: a.freeze,
            iterations: a.iterations,
            checkpoints: a.checkpoints.as_deref(),
            sequences: a.sequences.as_deref(),
            seed: a.seed,
            out: &a.out,
            pred_dir: a.pred_dir.as_deref(),
        }),
        Command::Eval(a) => commands::eval(
            &a.pred_dir,
            &a.gt_dir,
            a.config.as_deref(),
            &a.out,
            a.overlay_dir.as_deref(),
            a.images.as_deref(),
        ),
        Command::Experiment(a) => commands::experiment(commands::ExperimentOptions {
            data: &a.data,
            train: &a.train,
            test: &a.test,
            modes: &a.modes,
            misalign: &a.misalign,
            delays: &a.delays,
            freezes: &a.freezes,
            checkpoints: a.checkpoints.as_deref(),
            offline_iterations: a.offline_iterations,
            seed: a.seed,
            out: &a.out,
            table: a.table.as_deref(),
        }),
    }
}
