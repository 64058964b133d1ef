use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use navinterp::evaluation::{evaluate, EvalConfig, EvalInputs, MetricsReport, METRICS};
use navinterp::formats;
use navinterp::image::{Flow, Image};
use navinterp::losses::{LossWeights, ReconKind};
use navinterp::models::{init_params, interpolate_sequence, train_with, ArchitectureSpec, Dataset, TrainConfig, Variant};
use navinterp::phantom::{gen_sequence, PhantomConfig, PhantomTruth};
use navinterp::registration::{register, RegistrationConfig};

pub const SEQUENCE: &str = "sequence.nseq";
pub const TRUTH_FLOWS: &str = "flows.nflw";
pub const LANDMARKS: &str = "landmarks.csv";
pub const MASK: &str = "mask.pgm";
pub const PREDICTIONS: &str = "pred.nseq";
pub const PREDICTED_FLOWS: &str = "pred.nflw";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_sequence(path: &Path) -> Result<Vec<Image>> {
    formats::read_sequence(path).with_context(|| format!("reading {}", path.display()))
}

/// Phantom sequence, consecutive truth flows, landmarks and ROI mask.
pub fn gen_data(cfg: &PhantomConfig, out_dir: &Path) -> Result<PhantomTruth> {
    let p = gen_sequence(cfg)?;
    create_dir(out_dir)?;
    let flows = (0..p.frames.len().saturating_sub(1))
        .map(|t| p.flow(t, t + 1))
        .collect::<navinterp::Result<Vec<_>>>()?;
    formats::write_sequence(out_dir.join(SEQUENCE), &p.frames)?;
    formats::write_flows(out_dir.join(TRUTH_FLOWS), &flows)?;
    let landmarks: Vec<_> = p.landmarks.iter().flatten().copied().collect();
    formats::write_landmarks(out_dir.join(LANDMARKS), &landmarks)?;
    formats::write_mask(out_dir.join(MASK), &p.roi_mask)?;

    let (lo, hi) = p
        .amplitudes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    println!(
        "generated {} frames of {}x{} (seed {}) into {}",
        p.frames.len(),
        cfg.height,
        cfg.width,
        cfg.seed,
        out_dir.display()
    );
    println!("amplitude range {lo:.3}..{hi:.3} px, ROI {} px, normalization p2 {:.4} p98 {:.4}", p.roi_mask.count(), p.p2, p.p98);
    Ok(p)
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub variant: Variant,
    pub recon: ReconKind,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// Train on targets inside the first `train_frames` frames; 0 uses all.
    pub train_frames: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// `model.nvwt` -> `model.loss.csv`.
pub fn loss_csv_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut frames = read_sequence(&a.data)?;
    if a.train_frames > 0 {
        ensure!(
            a.train_frames <= frames.len(),
            "train_frames {} exceeds the {} frames of {}",
            a.train_frames,
            frames.len(),
            a.data.display()
        );
        frames.truncate(a.train_frames);
    }
    let dataset = Dataset::doubling(frames)?;
    let defaults = LossWeights::for_recon(a.recon);
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        steps: a.steps,
        loss: LossWeights {
            lambda1: a.lambda1.unwrap_or(defaults.lambda1),
            lambda2: a.lambda2.unwrap_or(defaults.lambda2),
            ..defaults
        },
        seed: a.seed,
        checkpoint_every: 0,
    };
    let params = init_params(&ArchitectureSpec::standard(a.variant), a.seed)?;
    println!(
        "training {} with {} loss (lambda1 {}, lambda2 {}) on {} targets for {} steps",
        a.variant,
        a.recon,
        cfg.loss.lambda1,
        cfg.loss.lambda2,
        dataset.len(),
        cfg.steps
    );
    let trained = train_with(&dataset, params, &cfg, |_, _, _| Ok(()))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    formats::write_params(&a.out, &trained.params)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in trained.losses.iter().enumerate() {
        csv.push_str(&format!("{},{l:.9}\n", i + 1));
    }
    let csv_path = loss_csv_path(&a.out);
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    println!(
        "loss {:.6} -> {:.6}; wrote {} and {}",
        trained.losses[0],
        trained.losses[trained.losses.len() - 1],
        a.out.display(),
        csv_path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acquired {
    /// The input is a full-rate sequence; its even frames are the acquired ones.
    Even,
    /// Every input frame was acquired.
    All,
}

pub struct InterpolateArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub acquired: Acquired,
    /// First input frame used.
    pub first_frame: usize,
    /// Number of input frames used from `first_frame`; 0 takes the rest.
    pub frame_count: usize,
}

/// Full-rate indices of the written predictions.
pub fn interpolate(a: &InterpolateArgs) -> Result<Vec<usize>> {
    let params = formats::read_params(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let frames = read_sequence(&a.data)?;
    ensure!(
        a.first_frame < frames.len(),
        "first frame {} is beyond the {} input frames",
        a.first_frame,
        frames.len()
    );
    let end = if a.frame_count == 0 {
        frames.len()
    } else {
        (a.first_frame + a.frame_count).min(frames.len())
    };
    let window = &frames[a.first_frame..end];
    let (acquired, offset): (Vec<Image>, usize) = match a.acquired {
        Acquired::Even => (window.iter().step_by(2).cloned().collect(), a.first_frame),
        Acquired::All => (window.to_vec(), 2 * a.first_frame),
    };
    let out = interpolate_sequence(&params, &acquired)?;
    let indices: Vec<usize> = out.indices.iter().map(|t| t + offset).collect();

    create_dir(&a.out)?;
    formats::write_sequence(a.out.join(PREDICTIONS), &out.frames)?;
    let previews = a.out.join("previews");
    create_dir(&previews)?;
    for (t, f) in indices.iter().zip(&out.frames) {
        fs::write(previews.join(format!("frame_{t:04}.pgm")), formats::encode_preview(f))?;
    }
    if params.variant.has_flows() {
        let shift = offset as i64;
        let flows: Vec<Flow> = out
            .flows
            .iter()
            .flatten()
            .map(|f| {
                let mut f = f.clone();
                f.from += shift;
                f.to += shift;
                f
            })
            .collect();
        formats::write_flows(a.out.join(PREDICTED_FLOWS), &flows)?;
        for f in flows.iter().filter(|f| f.to == f.from + 1) {
            let (h, w) = f.dims();
            let mag = Image::from_fn(h, w, |r, c| f.magnitude_at(r, c) as f32);
            fs::write(previews.join(format!("flow_{:04}.pgm", f.from)), formats::encode_preview(&mag))?;
        }
    }
    println!(
        "{} checkpoint: {} predictions at full-rate frames {}..={} (stride 2) in {}",
        params.variant,
        indices.len(),
        indices[0],
        indices[indices.len() - 1],
        a.out.display()
    );
    Ok(indices)
}

pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub flows: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub reference_frame: usize,
    pub first_index: usize,
    pub stride: usize,
    pub config: EvalConfig,
    pub out: PathBuf,
}

/// The `t -> t+1` flow for every index, matched by frame tags.
fn forward_flows(flows: Vec<Flow>, indices: &[usize]) -> Result<Vec<Flow>> {
    let mut by_from: BTreeMap<i64, Flow> = flows.into_iter().filter(|f| f.to == f.from + 1).map(|f| (f.from, f)).collect();
    indices
        .iter()
        .map(|&t| {
            by_from
                .remove(&(t as i64))
                .with_context(|| format!("index misalignment: no {t} -> {} flow for prediction at frame {t}", t + 1))
        })
        .collect()
}

pub fn evaluate_files(a: &EvaluateArgs) -> Result<MetricsReport> {
    ensure!(a.stride >= 1, "stride must be >= 1");
    let predictions = read_sequence(&a.pred)?;
    let truth = read_sequence(&a.truth)?;
    let indices: Vec<usize> = (0..predictions.len()).map(|j| a.first_index + a.stride * j).collect();
    if let Some(&last) = indices.last() {
        ensure!(
            last < truth.len(),
            "index misalignment: prediction {} maps to frame {last} but truth has {} frames",
            predictions.len() - 1,
            truth.len()
        );
    }
    let flows = match &a.flows {
        Some(p) => Some(forward_flows(
            formats::read_flows(p).with_context(|| format!("reading {}", p.display()))?,
            &indices,
        )?),
        None => None,
    };
    let landmarks = match &a.landmarks {
        Some(p) => {
            let l = formats::read_landmarks(p).with_context(|| format!("reading {}", p.display()))?;
            Some(formats::landmarks_by_frame(&l, truth.len()))
        }
        None => None,
    };
    let roi = match &a.mask {
        Some(p) => Some(formats::read_mask(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let inputs = EvalInputs {
        predictions: &predictions,
        indices: &indices,
        truth: &truth,
        flows: flows.as_deref(),
        landmarks: landmarks.as_deref(),
        roi: roi.as_ref(),
        reference: a.reference_frame,
    };
    let report = evaluate(&inputs, &a.config)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(&a.out, report.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    for n in &report.notices {
        println!("notice: {n}");
    }
    if !report.inversion_flags.is_empty() {
        println!("notice: flow inversion did not converge at frames {:?}", report.inversion_flags);
    }
    for (metric, _) in METRICS {
        if let Some(s) = report.aggregate(metric) {
            println!("{metric:>20}  mean {:.4}  p{} {:.4}", s.mean, s.percentile_rank, s.percentile);
        }
    }
    println!("wrote {}", a.out.display());
    Ok(report)
}

pub struct RegisterArgs {
    pub moving: PathBuf,
    pub moving_frame: usize,
    pub fixed: PathBuf,
    pub fixed_frame: usize,
    pub config: RegistrationConfig,
    pub out: PathBuf,
}

fn frame_of(path: &Path, index: usize) -> Result<Image> {
    let frames = read_sequence(path)?;
    let n = frames.len();
    frames
        .into_iter()
        .nth(index)
        .with_context(|| format!("{} has {n} frames, no frame {index}", path.display()))
}

pub fn register_files(a: &RegisterArgs) -> Result<f64> {
    let moving = frame_of(&a.moving, a.moving_frame)?;
    let fixed = frame_of(&a.fixed, a.fixed_frame)?;
    if moving.dims() != fixed.dims() {
        bail!(
            "moving image is {:?} but fixed image is {:?}",
            moving.dims(),
            fixed.dims()
        );
    }
    let r = register(&moving, &fixed, &a.config)?;
    formats::write_flows(&a.out, std::slice::from_ref(&r.flow))?;
    println!("lcc {:.6}", r.similarity);
    println!("wrote {}", a.out.display());
    Ok(r.similarity)
}

/// gen-data, train, interpolate and evaluate in `cfg.out_dir`.
///
/// The held-out span is the tail of the sequence: `eval_frames`
/// predictions need `2 * eval_frames + 5` full-rate frames, and training only
/// sees the frames before them. Motion metrics use `cfg.reference_frame`, or
/// else the minimal-amplitude frame of the held-out span.
pub fn pipeline(cfg: &crate::config::Config) -> Result<MetricsReport> {
    let out = &cfg.out_dir;
    let data = out.join("data");
    let phantom = PhantomConfig {
        seed: cfg.seed,
        ..cfg.phantom.clone()
    };
    let truth = gen_data(&phantom, &data)?;

    let span = 2 * cfg.eval_frames + 5;
    ensure!(cfg.eval_frames >= 1, "eval_frames must be >= 1");
    ensure!(
        phantom.frames >= span + 7,
        "{} frames cannot hold {} held-out predictions plus training targets",
        phantom.frames,
        cfg.eval_frames
    );
    let first = phantom.frames - span;
    let reference = cfg.reference_frame.unwrap_or_else(|| {
        let window = &truth.amplitudes[first..];
        first + window.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
    });
    let checkpoint = out.join("model.nvwt");
    train(&TrainArgs {
        data: data.join(SEQUENCE),
        variant: cfg.model,
        recon: cfg.loss,
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        train_frames: first,
        seed: cfg.seed,
        out: checkpoint.clone(),
    })?;
    let interp = out.join("interp");
    let indices = interpolate(&InterpolateArgs {
        checkpoint,
        data: data.join(SEQUENCE),
        out: interp.clone(),
        acquired: Acquired::Even,
        first_frame: first,
        frame_count: span,
    })?;
    evaluate_files(&EvaluateArgs {
        pred: interp.join(PREDICTIONS),
        truth: data.join(SEQUENCE),
        flows: cfg.model.has_flows().then(|| interp.join(PREDICTED_FLOWS)),
        landmarks: Some(data.join(LANDMARKS)),
        mask: Some(data.join(MASK)),
        reference_frame: reference,
        first_index: indices[0],
        stride: 2,
        config: EvalConfig {
            registration: cfg.registration.clone(),
            pixel_spacing_mm: cfg.pixel_spacing_mm,
            motion_diff: cfg.motion_diff,
        },
        out: out.join("metrics.csv"),
    })
}
