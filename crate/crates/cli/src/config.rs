//! Flat `key = value` configuration for the pipeline and `gen-data`.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use navinterp::evaluation::MotionDiff;
use navinterp::losses::ReconKind;
use navinterp::models::Variant;
use navinterp::phantom::PhantomConfig;
use navinterp::registration::RegistrationConfig;

/// Every key with its meaning, as printed by `navinterp keys`.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for generation, initialization and batch order"),
    ("out_dir", "directory receiving all pipeline artifacts"),
    ("height", "phantom rows"),
    ("width", "phantom columns"),
    ("frames", "phantom frame count"),
    ("amplitude_px", "peak breathing displacement"),
    ("period_frames", "breathing period"),
    ("drift_px_per_100frames", "slow baseline drift"),
    ("cycle_jitter", "relative std of per-cycle amplitude and period"),
    ("noise_std", "Gaussian noise in normalized units"),
    ("rigid", "move the whole field of view as one block (true/false)"),
    ("model", "scin | mfin | mfinc"),
    ("loss", "l2 | ssim"),
    ("steps", "training steps"),
    ("batch_size", "samples per step"),
    ("learning_rate", "Adam step size"),
    ("lambda1", "TV weight (default depends on loss)"),
    ("lambda2", "cycle weight (default depends on loss)"),
    ("eval_frames", "held-out predictions to interpolate and score"),
    ("reference_frame", "reference frame for motion metrics (default: least inhaled held-out frame)"),
    ("motion_diff", "vector | magnitude"),
    ("pixel_spacing_mm", "mm per pixel in reports"),
    ("reg_grid_spacing_px", "registration control-point spacing"),
    ("reg_lcc_window", "registration LCC window (odd)"),
    ("reg_tv_weight", "registration TV weight"),
    ("reg_iterations", "registration Adam iterations per level"),
    ("reg_learning_rate", "registration peak Adam step size"),
    ("reg_pyramid_levels", "registration pyramid levels"),
    ("reg_smoothing_sigma_px", "registration Gaussian pre-smoothing"),
];

#[derive(Debug, Clone)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub phantom: PhantomConfig,
    pub model: Variant,
    pub loss: ReconKind,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub eval_frames: usize,
    pub reference_frame: Option<usize>,
    pub motion_diff: MotionDiff,
    pub pixel_spacing_mm: f64,
    pub registration: RegistrationConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("navinterp-out"),
            phantom: PhantomConfig::default(),
            model: Variant::Mfin,
            loss: ReconKind::Ssim,
            steps: 300,
            batch_size: 16,
            learning_rate: 1e-3,
            lambda1: None,
            lambda2: None,
            eval_frames: 32,
            reference_frame: None,
            motion_diff: MotionDiff::Vector,
            pixel_spacing_mm: navinterp::flow::DEFAULT_PIXEL_SPACING_MM,
            registration: RegistrationConfig::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| anyhow!("`{key}`: cannot parse `{v}`"))
}

pub fn parse_variant(v: &str) -> Result<Variant> {
    match v {
        "scin" => Ok(Variant::Scin),
        "mfin" => Ok(Variant::Mfin),
        "mfinc" => Ok(Variant::Mfinc),
        _ => bail!("unknown model `{v}` (expected scin, mfin or mfinc)"),
    }
}

pub fn parse_recon(v: &str) -> Result<ReconKind> {
    match v {
        "l2" => Ok(ReconKind::L2),
        "ssim" => Ok(ReconKind::Ssim),
        _ => bail!("unknown loss `{v}` (expected l2 or ssim)"),
    }
}

pub fn parse_motion_diff(v: &str) -> Result<MotionDiff> {
    match v {
        "vector" => Ok(MotionDiff::Vector),
        "magnitude" => Ok(MotionDiff::Magnitude),
        _ => bail!("unknown motion_diff `{v}` (expected vector or magnitude)"),
    }
}

impl Config {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.phantom;
        let r = &mut self.registration;
        match key {
            "seed" => self.seed = num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "height" => p.height = num(key, v)?,
            "width" => p.width = num(key, v)?,
            "frames" => p.frames = num(key, v)?,
            "amplitude_px" => p.amplitude_px = num(key, v)?,
            "period_frames" => p.period_frames = num(key, v)?,
            "drift_px_per_100frames" => p.drift_px_per_100frames = num(key, v)?,
            "cycle_jitter" => p.cycle_jitter = num(key, v)?,
            "noise_std" => p.noise_std = num(key, v)?,
            "rigid" => p.rigid = num(key, v)?,
            "model" => self.model = parse_variant(v)?,
            "loss" => self.loss = parse_recon(v)?,
            "steps" => self.steps = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "lambda1" => self.lambda1 = Some(num(key, v)?),
            "lambda2" => self.lambda2 = Some(num(key, v)?),
            "eval_frames" => self.eval_frames = num(key, v)?,
            "reference_frame" => self.reference_frame = Some(num(key, v)?),
            "motion_diff" => self.motion_diff = parse_motion_diff(v)?,
            "pixel_spacing_mm" => self.pixel_spacing_mm = num(key, v)?,
            "reg_grid_spacing_px" => r.grid_spacing_px = num(key, v)?,
            "reg_lcc_window" => r.lcc_window = num(key, v)?,
            "reg_tv_weight" => r.tv_weight = num(key, v)?,
            "reg_iterations" => r.iterations = num(key, v)?,
            "reg_learning_rate" => r.learning_rate = num(key, v)?,
            "reg_pyramid_levels" => r.pyramid_levels = num(key, v)?,
            "reg_smoothing_sigma_px" => r.smoothing_sigma_px = num(key, v)?,
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            cfg.set(k.trim(), v.trim())
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}
