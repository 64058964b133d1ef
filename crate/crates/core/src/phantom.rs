//! Synthetic breathing navigator sequences with analytically known motion.
//!
//! Frame `t` samples a continuous template at `phi_t(x) = x + a_t w(x) e_r`,
//! where `a_t` is the breathing amplitude, `e_r` the row (superior-inferior)
//! direction and `w` a spatial weight. `w` is the product of a lateral
//! 8-px smooth step, which separates a moving organ column from static
//! tissue (a sliding interface), and a gentle vertical falloff. Everything
//! is computed in double precision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::flow::Landmark;
use crate::image::{Flow, Image, Mask};
use crate::models::{nearest_rank, normalize_block};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub amplitude_px: f64,
    pub period_frames: f64,
    pub drift_px_per_100frames: f64,
    /// Relative standard deviation of each cycle's amplitude and period.
    pub cycle_jitter: f64,
    /// Noise standard deviation in normalized intensity units.
    pub noise_std: f64,
    pub seed: u64,
    /// Move the whole field of view as one block (`w = 1`).
    pub rigid: bool,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            frames: 512,
            amplitude_px: 8.0,
            period_frames: 10.0,
            drift_px_per_100frames: 1.0,
            cycle_jitter: 0.1,
            noise_std: 0.02,
            seed: 0,
            rigid: false,
        }
    }
}

/// Width of the lateral transition of the motion weight, px.
pub const SLIDING_BAND_PX: f64 = 8.0;
/// Vertical falloff of the motion weight: from 1 down to `H_MIN` over
/// `FALLOFF_PX` rows.
const H_MIN: f64 = 0.6;
const FALLOFF_PX: f64 = 48.0;
/// Jittered cycle parameters are clamped to this factor around nominal.
const JITTER_CLAMP: f64 = 0.5;

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.height == 0 || self.width == 0 || self.height % 8 != 0 || self.width % 8 != 0 {
            return bad(format!(
                "phantom size {}x{} must be a non-zero multiple of 8",
                self.height, self.width
            ));
        }
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(self.amplitude_px >= 0.0 && self.amplitude_px < self.height as f64 / 4.0) {
            return bad(format!(
                "amplitude {} must lie in [0, height/4)",
                self.amplitude_px
            ));
        }
        if !(self.period_frames >= 4.0) {
            return bad(format!("period {} must be >= 4 frames", self.period_frames));
        }
        if !(self.cycle_jitter >= 0.0
            && self.noise_std >= 0.0
            && self.drift_px_per_100frames.is_finite())
        {
            return bad("jitter and noise must be >= 0, drift finite".into());
        }
        Ok(())
    }

    /// Largest `|a_t|` any frame of this configuration can reach.
    pub fn max_amplitude(&self) -> f64 {
        self.amplitude_px * (1.0 + JITTER_CLAMP.min(3.0 * self.cycle_jitter))
            + self.drift_px_per_100frames.abs() * self.frames as f64 / 100.0
    }

    fn lateral_edge(&self) -> f64 {
        0.62 * self.width as f64
    }

    /// Motion weight at a (fractional) pixel position.
    pub fn weight(&self, r: f64, c: f64) -> f64 {
        if self.rigid {
            return 1.0;
        }
        let g = 1.0 - smoothstep((c - self.lateral_edge()) / SLIDING_BAND_PX + 0.5);
        let r0 = 0.25 * self.height as f64;
        let h = 1.0 - (1.0 - H_MIN) * smoothstep((r - r0) / FALLOFF_PX);
        g * h
    }

    /// Upper bound of `|dw/dr|`, the only derivative that matters for a
    /// displacement along rows.
    pub fn max_row_slope(&self) -> f64 {
        if self.rigid {
            0.0
        } else {
            1.5 * (1.0 - H_MIN) / FALLOFF_PX
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn cycle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(start, period, amplitude)` of breathing cycle `k`.
fn cycle(cfg: &PhantomConfig, k: u64, start: f64) -> (f64, f64, f64) {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = cycle_rng(cfg.seed, k);
    let j = |rng: &mut ChaCha8Rng| {
        let z: f64 = normal.sample(rng);
        (1.0 + cfg.cycle_jitter * z).clamp(1.0 - JITTER_CLAMP, 1.0 + JITTER_CLAMP)
    };
    let period = cfg.period_frames * j(&mut rng);
    let amplitude = cfg.amplitude_px * j(&mut rng);
    (start, period, amplitude)
}

/// Breathing amplitude `a_t = A_c sin^2(pi (t - s_c) / P_c) + drift t / 100`
/// in pixels, with per-cycle jitter of `A_c` and `P_c`.
pub fn breathing_signal(t: f64, cfg: &PhantomConfig) -> f64 {
    let mut start = 0.0;
    let mut k = 0;
    loop {
        let (s, p, a) = cycle(cfg, k, start);
        if t < s + p {
            let phase = std::f64::consts::PI * (t - s) / p;
            return a * phase.sin().powi(2) + cfg.drift_px_per_100frames * t / 100.0;
        }
        start = s + p;
        k += 1;
    }
}

/// Continuous template intensity at a (fractional) position.
/// Plane waves `(k_r, k_c, phase)` of the background texture, wavelengths
/// 6 to 15 px in several orientations.
const TEXTURE: [(f64, f64, f64); 5] = [
    (0.37, 0.11, 0.0),
    (-0.13, 0.41, 1.1),
    (0.52, -0.48, 2.3),
    (0.29, 0.83, 0.7),
    (-0.71, 0.35, 4.0),
];
const TEXTURE_AMPLITUDE: f64 = 0.02;

fn template(cfg: &PhantomConfig, r: f64, c: f64) -> f64 {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let sig = |x: f64, width: f64| 1.0 / (1.0 + (-x / width).exp());

    let texture = TEXTURE
        .iter()
        .map(|&(kr, kc, phase)| (kr * r + kc * c + phase).sin())
        .sum::<f64>()
        * TEXTURE_AMPLITUDE;
    let static_tissue = 0.45 + texture;

    // moving column: lung above a dome, organ below
    let v = c / w - 0.3;
    let dome = h * (0.35 + 0.9 * v * v);
    let organ = sig(r - dome, 0.8);
    let lung = 0.1 + texture;
    let mut moving = lung + (0.75 + 0.5 * texture - lung) * organ;
    for &(vr, vc) in &vessels(cfg) {
        let d2 = (r - vr).powi(2) + (c - vc).powi(2);
        moving -= 0.45 * organ * (-d2 / (2.0 * 1.6f64.powi(2))).exp();
    }

    let side = sig(c - cfg.lateral_edge(), 0.8);
    moving * (1.0 - side) + static_tissue * side
}

/// Template positions of the vessel landmarks.
fn vessels(cfg: &PhantomConfig) -> [(f64, f64); 2] {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    [(0.55 * h, 0.25 * w), (0.70 * h, 0.45 * w)]
}

/// Everything generated for one configuration.
#[derive(Debug, Clone)]
pub struct PhantomTruth {
    pub config: PhantomConfig,
    pub frames: Vec<Image>,
    /// Breathing amplitude `a_t` of every frame, px.
    pub amplitudes: Vec<f64>,
    /// Landmark positions of every frame, ordered by id.
    pub landmarks: Vec<Vec<Landmark>>,
    pub roi_mask: Mask,
    /// Intensity anchors used for normalization.
    pub p2: f64,
    pub p98: f64,
}

const INVERSE_TOL: f64 = 1e-6;

impl PhantomTruth {
    /// Row `z` with `z + a w(z, c) = y`.
    fn inverse_row(&self, y: f64, c: f64, a: f64) -> f64 {
        let mut z = y;
        for _ in 0..500 {
            let next = y - a * self.config.weight(z, c);
            let done = (next - z).abs() < INVERSE_TOL;
            z = next;
            if done {
                break;
            }
        }
        z
    }

    /// `F(t -> s)(x) = phi_s^-1(phi_t(x)) - x`.
    pub fn flow(&self, t: usize, s: usize) -> Result<Flow> {
        let n = self.frames.len();
        if t >= n || s >= n {
            return Err(Error::InvalidConfig(format!(
                "flow {t}->{s} requested from a {n}-frame phantom"
            )));
        }
        let (at, as_) = (self.amplitudes[t], self.amplitudes[s]);
        let cfg = &self.config;
        Ok(Flow::from_fn(
            cfg.height,
            cfg.width,
            t as i64,
            s as i64,
            |r, c| {
                let (r, c) = (r as f64, c as f64);
                let y = r + at * cfg.weight(r, c);
                [self.inverse_row(y, c, as_) - r, 0.0]
            },
        ))
    }

    /// Index of the frame with the smallest breathing amplitude.
    pub fn min_amplitude_frame(&self) -> usize {
        self.amplitudes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }
}

/// Generate frames, amplitudes, landmarks and the ROI mask.
pub fn gen_sequence(cfg: &PhantomConfig) -> Result<PhantomTruth> {
    cfg.validate()?;
    let amplitudes: Vec<f64> = (0..cfg.frames)
        .map(|t| breathing_signal(t as f64, cfg))
        .collect();
    let a_max = amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if a_max * cfg.max_row_slope() >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "deformation not invertible: max |a| {a_max:.3} times max |dw/dr| {:.4} >= 1",
            cfg.max_row_slope()
        )));
    }

    let (h, w) = (cfg.height, cfg.width);
    let clean: Vec<Vec<f64>> = amplitudes
        .iter()
        .map(|&a| {
            let mut px = Vec::with_capacity(h * w);
            for r in 0..h {
                for c in 0..w {
                    let (rf, cf) = (r as f64, c as f64);
                    px.push(template(cfg, rf + a * cfg.weight(rf, cf), cf));
                }
            }
            px
        })
        .collect();

    // scale the noise so that it has `noise_std` after normalization
    let mut sorted: Vec<f64> = clean.iter().flatten().copied().collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let span = nearest_rank(&sorted, 98.0) - nearest_rank(&sorted, 2.0);
    let sigma = cfg.noise_std * span;
    let frames: Vec<Image> = clean
        .into_iter()
        .enumerate()
        .map(|(t, px)| {
            let mut noise = cycle_rng(cfg.seed ^ 0x6e6f_6973_65, t as u64);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let data = px
                .into_iter()
                .map(|v| {
                    if sigma > 0.0 {
                        (v + sigma * normal.sample(&mut noise)) as f32
                    } else {
                        v as f32
                    }
                })
                .collect();
            Image::new(h, w, data)
        })
        .collect::<Result<_>>()?;
    let block = normalize_block(&frames)?;

    let roi_mask = Mask::from_fn(h, w, |r, c| cfg.weight(r as f64, c as f64) > 0.5);
    let mut truth = PhantomTruth {
        config: cfg.clone(),
        frames: block.frames,
        amplitudes,
        landmarks: Vec::new(),
        roi_mask,
        p2: block.p2,
        p98: block.p98,
    };
    let targets = vessels(cfg);
    truth.landmarks = (0..cfg.frames)
        .map(|t| {
            let a = truth.amplitudes[t];
            targets
                .iter()
                .enumerate()
                .map(|(id, &(vr, vc))| Landmark {
                    frame: t,
                    id: id as u32,
                    row: truth.inverse_row(vr, vc, a),
                    col: vc,
                })
                .collect()
        })
        .collect();
    Ok(truth)
}
