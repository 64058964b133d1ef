//! `navinterp` command line: phantom generation, training, interpolation,
//! evaluation and registration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use navinterp::evaluation::{EvalConfig, MotionDiff};
use navinterp::losses::ReconKind;
use navinterp::models::Variant;
use navinterp::registration::RegistrationConfig;

use commands::Acquired;
use config::Config;

#[derive(Parser)]
#[command(name = "navinterp", version, about = "Motion-field-based temporal interpolation of 2D navigator sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a breathing phantom with ground-truth flows, landmarks and ROI.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train SCIN, MFIN or MFINc on a sequence file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "ssim")]
        loss: LossArg,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        /// TV weight; defaults to 0.001 (l2) or 0.1 (ssim).
        #[arg(long)]
        lambda1: Option<f64>,
        /// Cycle weight; defaults to 0.0005 (l2) or 0.05 (ssim).
        #[arg(long)]
        lambda2: Option<f64>,
        /// Only use the first N frames for training targets (0 = all).
        #[arg(long, default_value_t = 0)]
        train_frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint path; the loss CSV goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Double the frame rate of a sequence with a trained checkpoint.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// `all`: every input frame is acquired. `even`: the input is a
        /// full-rate sequence and its even frames are the acquired ones.
        #[arg(long, value_enum, default_value = "all")]
        acquired: AcquiredArg,
        #[arg(long, default_value_t = 0)]
        first_frame: usize,
        /// Input frames to use from `--first-frame` (0 = the rest).
        #[arg(long, default_value_t = 0)]
        frame_count: usize,
        /// Accepted for uniformity; interpolation draws no random numbers.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score predictions against ground truth and write a metrics CSV.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Predicted flows; needs the `t -> t+1` flow of every prediction.
        #[arg(long)]
        flows: Option<PathBuf>,
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        reference_frame: usize,
        /// Truth index of the first prediction.
        #[arg(long, default_value_t = 3)]
        first_index: usize,
        /// Truth-index step between predictions.
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long, value_enum, default_value = "vector")]
        motion_diff: MotionDiffArg,
        #[arg(long, default_value_t = navinterp::flow::DEFAULT_PIXEL_SPACING_MM)]
        pixel_spacing_mm: f64,
        #[command(flatten)]
        registration: RegArgs,
        #[arg(long)]
        out: PathBuf,
        /// Accepted for uniformity; evaluation draws no random numbers.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Register one frame onto another and write the dense flow.
    Register {
        #[arg(long)]
        moving: PathBuf,
        #[arg(long, default_value_t = 0)]
        moving_frame: usize,
        #[arg(long)]
        fixed: PathBuf,
        #[arg(long, default_value_t = 0)]
        fixed_frame: usize,
        #[command(flatten)]
        registration: RegArgs,
        #[arg(long)]
        out: PathBuf,
        /// Accepted for uniformity; registration draws no random numbers.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate, train, interpolate and evaluate from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the config keys.
    Keys,
}

#[derive(Args)]
struct RegArgs {
    #[arg(long, default_value_t = 4)]
    reg_grid_spacing_px: usize,
    #[arg(long, default_value_t = 9)]
    reg_lcc_window: usize,
    #[arg(long, default_value_t = 0.1)]
    reg_tv_weight: f64,
    #[arg(long, default_value_t = 300)]
    reg_iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    reg_learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    reg_pyramid_levels: usize,
    #[arg(long, default_value_t = 1.0)]
    reg_smoothing_sigma_px: f64,
}

impl From<RegArgs> for RegistrationConfig {
    fn from(a: RegArgs) -> Self {
        RegistrationConfig {
            grid_spacing_px: a.reg_grid_spacing_px,
            lcc_window: a.reg_lcc_window,
            tv_weight: a.reg_tv_weight,
            iterations: a.reg_iterations,
            learning_rate: a.reg_learning_rate,
            pyramid_levels: a.reg_pyramid_levels,
            smoothing_sigma_px: a.reg_smoothing_sigma_px,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Scin,
    Mfin,
    Mfinc,
}

impl From<ModelArg> for Variant {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Scin => Variant::Scin,
            ModelArg::Mfin => Variant::Mfin,
            ModelArg::Mfinc => Variant::Mfinc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    L2,
    Ssim,
}

impl From<LossArg> for ReconKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::L2 => ReconKind::L2,
            LossArg::Ssim => ReconKind::Ssim,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AcquiredArg {
    All,
    Even,
}

#[derive(Clone, Copy, ValueEnum)]
enum MotionDiffArg {
    Vector,
    Magnitude,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, out_dir, seed } => {
            let mut cfg = match config {
                Some(p) => Config::load(&p)?,
                None => Config::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let phantom = navinterp::phantom::PhantomConfig {
                seed: cfg.seed,
                ..cfg.phantom
            };
            commands::gen_data(&phantom, &out_dir).map(|_| ())
        }
        Command::Train {
            data,
            model,
            loss,
            steps,
            batch_size,
            learning_rate,
            lambda1,
            lambda2,
            train_frames,
            seed,
            out,
        } => commands::train(&commands::TrainArgs {
            data,
            variant: model.into(),
            recon: loss.into(),
            steps,
            batch_size,
            learning_rate,
            lambda1,
            lambda2,
            train_frames,
            seed,
            out,
        }),
        Command::Interpolate {
            checkpoint,
            data,
            out,
            acquired,
            first_frame,
            frame_count,
            seed: _,
        } => commands::interpolate(&commands::InterpolateArgs {
            checkpoint,
            data,
            out,
            acquired: match acquired {
                AcquiredArg::All => Acquired::All,
                AcquiredArg::Even => Acquired::Even,
            },
            first_frame,
            frame_count,
        })
        .map(|_| ()),
        Command::Evaluate {
            pred,
            truth,
            flows,
            landmarks,
            mask,
            reference_frame,
            first_index,
            stride,
            motion_diff,
            pixel_spacing_mm,
            registration,
            out,
            seed: _,
        } => commands::evaluate_files(&commands::EvaluateArgs {
            pred,
            truth,
            flows,
            landmarks,
            mask,
            reference_frame,
            first_index,
            stride,
            config: EvalConfig {
                registration: registration.into(),
                pixel_spacing_mm,
                motion_diff: match motion_diff {
                    MotionDiffArg::Vector => MotionDiff::Vector,
                    MotionDiffArg::Magnitude => MotionDiff::Magnitude,
                },
            },
            out,
        })
        .map(|_| ()),
        Command::Register {
            moving,
            moving_frame,
            fixed,
            fixed_frame,
            registration,
            out,
            seed: _,
        } => commands::register_files(&commands::RegisterArgs {
            moving,
            moving_frame,
            fixed,
            fixed_frame,
            config: registration.into(),
            out,
        })
        .map(|_| ()),
        Command::Pipeline { config, seed, out_dir } => {
            let mut cfg = Config::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            commands::pipeline(&cfg).map(|_| ())
        }
        Command::Keys => {
            for (k, about) in config::KEYS {
                println!("{k:<24} {about}");
            }
            Ok(())
        }
    }
}

/// 2 for numerical failures anywhere in the chain, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .any(|c| c.downcast_ref::<navinterp::Error>().is_some_and(navinterp::Error::is_numerical));
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
