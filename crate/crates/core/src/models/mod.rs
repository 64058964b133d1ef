//! The three interpolation networks and everything needed to train and run
//! them.
//!
//! All variants share one encoder/decoder trunk fed with the stack
//! `[N(t-3), N(t-1), N(t+1), N(t+3)]`. SCIN ends in a single head that paints
//! the missing frame directly. MFIN ends in two flow heads, `t -> t-1` and
//! `t -> t+1`, whose flows warp the neighbours onto frame `t`. MFINc adds a
//! third head for `t+1 -> t-1`.

mod interpolate;
mod normalize;
mod train;

pub use interpolate::{interpolate_sequence, Interpolation};
pub use normalize::{nearest_rank, normalize_block, NormalizedBlock};
pub use train::{train, train_with, Dataset, Sample, TrainConfig, Trained};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::error::{shape_mismatch, Error, Result};
use crate::layers::{ConvSpec, TaggedFlow};
use crate::losses::{total_loss_mfin, total_loss_mfinc, total_loss_scin, LossTargets, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Scin,
    Mfin,
    Mfinc,
}

impl Variant {
    pub fn code(self) -> u32 {
        match self {
            Variant::Scin => 0,
            Variant::Mfin => 1,
            Variant::Mfinc => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Variant::Scin),
            1 => Ok(Variant::Mfin),
            2 => Ok(Variant::Mfinc),
            c => Err(Error::Format(format!("unknown variant code {c}"))),
        }
    }

    pub fn head_count(self) -> usize {
        match self {
            Variant::Scin => 1,
            Variant::Mfin => 2,
            Variant::Mfinc => 3,
        }
    }

    pub fn has_flows(self) -> bool {
        self != Variant::Scin
    }

    /// Flows emitted per interpolated frame.
    pub fn flow_count(self) -> usize {
        match self {
            Variant::Scin => 0,
            v => v.head_count(),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scin" => Ok(Variant::Scin),
            "mfin" => Ok(Variant::Mfin),
            "mfinc" => Ok(Variant::Mfinc),
            other => Err(Error::InvalidConfig(format!(
                "unknown model `{other}` (scin|mfin|mfinc)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Scin => "scin",
            Variant::Mfin => "mfin",
            Variant::Mfinc => "mfinc",
        })
    }
}

/// Layer list of a network: the shared trunk first, then each head's layers
/// in head order. `upsample_after[i]` inserts a 2x upsampling after layer `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    pub conv_specs: Vec<ConvSpec>,
    pub upsample_after: Vec<bool>,
    pub shared_prefix_len: usize,
    pub head_count: usize,
}

impl ArchitectureSpec {
    /// Filter sizes (7, 5, 3, 3, 3, 3, 3, 3) with channels
    /// 4-16-32-64-64-32-32-16-2 (16-1 for SCIN's last layer).
    pub fn standard(variant: Variant) -> Self {
        Self::with_widths(variant, [16, 32, 64, 64, 32, 32, 16])
    }

    /// Same layout with custom hidden widths `n2..n8`.
    pub fn with_widths(variant: Variant, n: [usize; 7]) -> Self {
        let mut conv_specs = vec![
            ConvSpec::new(7, 4, n[0], 2, true),
            ConvSpec::new(5, n[0], n[1], 2, true),
            ConvSpec::new(3, n[1], n[2], 2, true),
            ConvSpec::new(3, n[2], n[3], 1, true),
            ConvSpec::new(3, n[3], n[4], 1, true),
        ];
        let mut upsample_after = vec![false, false, false, true, true];
        let out = if variant == Variant::Scin { 1 } else { 2 };
        for _ in 0..variant.head_count() {
            conv_specs.push(ConvSpec::new(3, n[4], n[5], 1, true));
            conv_specs.push(ConvSpec::new(3, n[5], n[6], 1, true));
            conv_specs.push(ConvSpec::new(3, n[6], out, 1, false));
            upsample_after.extend([false, true, false]);
        }
        Self {
            variant,
            conv_specs,
            upsample_after,
            shared_prefix_len: 5,
            head_count: variant.head_count(),
        }
    }

    fn head_len(&self) -> usize {
        (self.conv_specs.len() - self.shared_prefix_len) / self.head_count.max(1)
    }

    /// Total stride of the network; inputs must be divisible by it.
    pub fn downsampling(&self) -> usize {
        self.conv_specs[..self.shared_prefix_len]
            .iter()
            .map(|s| s.stride)
            .product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.head_count != self.variant.head_count() {
            return bad(format!(
                "{} needs {} heads, got {}",
                self.variant,
                self.variant.head_count(),
                self.head_count
            ));
        }
        if self.upsample_after.len() != self.conv_specs.len() {
            return bad("upsample_after must have one entry per layer".into());
        }
        if self.shared_prefix_len > self.conv_specs.len()
            || (self.conv_specs.len() - self.shared_prefix_len) % self.head_count != 0
            || self.head_len() == 0
        {
            return bad("layers do not split into a trunk and equal heads".into());
        }
        for s in &self.conv_specs {
            s.validate()?;
        }
        let trunk = &self.conv_specs[..self.shared_prefix_len];
        if trunk.first().map(|s| s.in_channels) != Some(4) {
            return bad("the first layer must take 4 input frames".into());
        }
        for (i, pair) in trunk.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels {
                return bad(format!("layer {} -> {} channels do not chain", i, i + 1));
            }
        }
        let trunk_out = trunk.last().map_or(4, |s| s.out_channels);
        let want_out = if self.variant == Variant::Scin { 1 } else { 2 };
        for h in 0..self.head_count {
            let head = self.head(h);
            if head[0].in_channels != trunk_out {
                return bad(format!("head {h} does not chain onto the trunk"));
            }
            for pair in head.windows(2) {
                if pair[0].out_channels != pair[1].in_channels {
                    return bad(format!("head {h} channels do not chain"));
                }
            }
            let last = head.last().expect("non-empty head");
            if last.has_relu {
                return bad(format!("head {h} ends in an activation"));
            }
            if last.out_channels != want_out {
                return bad(format!(
                    "head {h} emits {} channels, expected {want_out}",
                    last.out_channels
                ));
            }
        }
        let ups = self.upsample_after.iter().filter(|&&u| u).count();
        let per_head = self.head_upsamples(0);
        let trunk_ups = self.upsample_after[..self.shared_prefix_len]
            .iter()
            .filter(|&&u| u)
            .count();
        if 1usize << (trunk_ups + per_head) != self.downsampling()
            || ups != trunk_ups + per_head * self.head_count
        {
            return bad("upsampling does not undo the encoder strides".into());
        }
        Ok(())
    }

    fn head(&self, h: usize) -> &[ConvSpec] {
        let start = self.shared_prefix_len + h * self.head_len();
        &self.conv_specs[start..start + self.head_len()]
    }

    fn head_upsamples(&self, h: usize) -> usize {
        let start = self.shared_prefix_len + h * self.head_len();
        self.upsample_after[start..start + self.head_len()]
            .iter()
            .filter(|&&u| u)
            .count()
    }

    /// Shapes of all parameter arrays: weight then bias for each layer.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.conv_specs
            .iter()
            .flat_map(|s| [s.weight_shape().to_vec(), vec![s.out_channels]])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Network weights. `weights[2 i]` and `weights[2 i + 1]` are the kernel and
/// bias of layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub arch: ArchitectureSpec,
    pub weights: Vec<Tensor<f32>>,
    pub rng_seed: u64,
}

/// Multiplier applied to the last layer of every flow head at
/// initialization, so that a fresh network predicts near-zero flows.
pub const FLOW_HEAD_INIT_SCALE: f64 = 1e-3;

/// Uniform `+-sqrt(6 / fan_in)` weights and zero biases, deterministic per
/// seed.
pub fn init_params(arch: &ArchitectureSpec, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head_len = arch.head_len();
    let mut weights = Vec::with_capacity(2 * arch.conv_specs.len());
    for (i, spec) in arch.conv_specs.iter().enumerate() {
        let bound = (6.0 / spec.fan_in() as f64).sqrt();
        let is_flow_head_end = arch.variant.has_flows()
            && i >= arch.shared_prefix_len
            && (i - arch.shared_prefix_len) % head_len == head_len - 1;
        let k = if is_flow_head_end {
            FLOW_HEAD_INIT_SCALE
        } else {
            1.0
        };
        let w = Tensor::from_fn(&spec.weight_shape(), |_| {
            (rng.random_range(-bound..bound) * k) as f32
        });
        weights.push(w);
        weights.push(Tensor::zeros(&[spec.out_channels]));
    }
    Ok(ModelParams {
        variant: arch.variant,
        arch: arch.clone(),
        weights,
        rng_seed: seed,
    })
}

impl ModelParams {
    /// Register the weights in `g`, trainable or not.
    pub fn bind<T: Real>(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.weights
            .iter()
            .map(|w| {
                let t = w.cast::<T>();
                if trainable {
                    g.param(t)
                } else {
                    g.constant(t)
                }
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        self.arch.validate()?;
        if self.arch.variant != self.variant {
            return Err(Error::Format("variant disagrees with architecture".into()));
        }
        let shapes = self.arch.param_shapes();
        if shapes.len() != self.weights.len() {
            return Err(shape_mismatch(
                "ModelParams",
                &[shapes.len()],
                &[self.weights.len()],
            ));
        }
        for (s, w) in shapes.iter().zip(&self.weights) {
            if s.as_slice() != w.shape() {
                return Err(shape_mismatch("ModelParams", s, w.shape()));
            }
        }
        Ok(())
    }
}

/// Named network outputs. Flows are tagged relative to the target frame `t`
/// (`t = 0`, neighbours `-1` and `+1`).
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelOutputs {
    /// SCIN's direct estimate of N(t).
    pub intensity: Option<Var>,
    /// F(t -> t-1).
    pub flow_prev: Option<TaggedFlow>,
    /// F(t -> t+1).
    pub flow_next: Option<TaggedFlow>,
    /// F(t+1 -> t-1).
    pub flow_skip: Option<TaggedFlow>,
    /// N(t-1) warped by F(t -> t-1).
    pub pred_prev: Option<Var>,
    /// N(t+1) warped by F(t -> t+1); the canonical interpolated frame.
    pub pred_next: Option<Var>,
    /// N(t-1) warped by F(t+1 -> t-1), an estimate of N(t+1).
    pub pred_skip: Option<Var>,
}

impl ModelOutputs {
    /// The frame an interpolation run reports for the target.
    pub fn prediction(&self) -> Option<Var> {
        self.pred_next.or(self.intensity)
    }

    pub fn flows(&self) -> Vec<TaggedFlow> {
        [self.flow_prev, self.flow_next, self.flow_skip]
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Run the network on a `4 x H x W` input stack.
pub fn forward<T: Real>(
    g: &mut Graph<T>,
    arch: &ArchitectureSpec,
    params: &[Var],
    input: Var,
) -> Result<ModelOutputs> {
    let shape = g.value(input).shape().to_vec();
    let div = arch.downsampling();
    match shape[..] {
        [4, h, w] if h % div == 0 && w % div == 0 && h > 0 && w > 0 => {}
        [4, h, w] => {
            return Err(Error::InvalidConfig(format!(
                "image size {h}x{w} is not divisible by {div}"
            )))
        }
        _ => return Err(shape_mismatch("forward", &[4, 0, 0], &shape)),
    }
    if params.len() != 2 * arch.conv_specs.len() {
        return Err(shape_mismatch(
            "forward",
            &[2 * arch.conv_specs.len()],
            &[params.len()],
        ));
    }

    let layer = |g: &mut Graph<T>, i: usize, x: Var| -> Result<Var> {
        let y = g.conv_layer(x, &arch.conv_specs[i], params[2 * i], params[2 * i + 1])?;
        if arch.upsample_after[i] {
            g.upsample2x(y)
        } else {
            Ok(y)
        }
    };

    let mut x = input;
    for i in 0..arch.shared_prefix_len {
        x = layer(g, i, x)?;
    }
    let trunk = x;
    let head_len = arch.head_len();
    let mut heads = Vec::with_capacity(arch.head_count);
    for h in 0..arch.head_count {
        let mut y = trunk;
        for k in 0..head_len {
            y = layer(g, arch.shared_prefix_len + h * head_len + k, y)?;
        }
        heads.push(y);
    }

    let mut out = ModelOutputs::default();
    if arch.variant == Variant::Scin {
        out.intensity = Some(heads[0]);
        return Ok(out);
    }
    let prev = g.select_channel(input, 1)?;
    let next = g.select_channel(input, 2)?;
    let flow_prev = TaggedFlow::new(heads[0], 0, -1);
    let flow_next = TaggedFlow::new(heads[1], 0, 1);
    out.pred_prev = Some(g.warp(prev, flow_prev.var)?);
    out.pred_next = Some(g.warp(next, flow_next.var)?);
    out.flow_prev = Some(flow_prev);
    out.flow_next = Some(flow_next);
    if arch.variant == Variant::Mfinc {
        let flow_skip = TaggedFlow::new(heads[2], 1, -1);
        out.pred_skip = Some(g.warp(prev, flow_skip.var)?);
        out.flow_skip = Some(flow_skip);
    }
    Ok(out)
}

/// The training objective matching the network variant.
pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    variant: Variant,
    out: &ModelOutputs,
    targets: &LossTargets,
    weights: &LossWeights,
) -> Result<Var> {
    match variant {
        Variant::Scin => total_loss_scin(g, out, targets, weights),
        Variant::Mfin => total_loss_mfin(g, out, targets, weights),
        Variant::Mfinc => total_loss_mfinc(g, out, targets, weights),
    }
}
