use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{forward, total_loss, ModelParams};
use crate::autodiff::{AdamState, Graph, Real, Tensor};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{LossTargets, LossWeights};

/// Full-rate frames plus the indices usable as interpolation targets. A
/// target `t` needs frames `t-3`, `t-1`, `t+1` and `t+3`.
#[derive(Debug, Clone)]
pub struct Dataset {
    frames: Vec<Image>,
    targets: Vec<usize>,
}

/// One training tuple.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    /// `4 x H x W` stack of N(t-3), N(t-1), N(t+1), N(t+3).
    pub input: Tensor<T>,
    pub current: Tensor<T>,
    pub next: Tensor<T>,
}

impl Dataset {
    pub fn new(frames: Vec<Image>, targets: Vec<usize>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(first) = frames.first() {
            for f in &frames {
                first.check_same_dims(f, "Dataset::new")?;
            }
        }
        for &t in &targets {
            if t < 3 || t + 3 >= frames.len() {
                return Err(Error::InvalidConfig(format!(
                    "target {t} lacks +-3 frames of context in a {}-frame sequence",
                    frames.len()
                )));
            }
        }
        Ok(Self { frames, targets })
    }

    /// Every odd index with full context: the frames that would be missing
    /// if only every other navigator were acquired.
    pub fn doubling(frames: Vec<Image>) -> Result<Self> {
        let targets = (3..frames.len().saturating_sub(3))
            .filter(|t| t % 2 == 1)
            .collect();
        Self::new(frames, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    /// Keep only the targets selected by `keep`.
    pub fn filtered(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        Self::new(
            self.frames.clone(),
            self.targets.iter().copied().filter(|&t| keep(t)).collect(),
        )
    }

    /// The tuple for the `i`-th target.
    pub fn sample<T: Real>(&self, i: usize) -> Sample<T> {
        let t = self.targets[i];
        Sample {
            input: stack(&[
                &self.frames[t - 3],
                &self.frames[t - 1],
                &self.frames[t + 1],
                &self.frames[t + 3],
            ]),
            current: self.frames[t].to_tensor(),
            next: self.frames[t + 1].to_tensor(),
        }
    }
}

/// Stack same-sized images into a `C x H x W` tensor.
pub(crate) fn stack<T: Real>(frames: &[&Image]) -> Tensor<T> {
    let (h, w) = frames[0].dims();
    let data = frames
        .iter()
        .flat_map(|f| f.data().iter().map(|&v| T::lit(v as f64)))
        .collect();
    Tensor::new(&[frames.len(), h, w], data).expect("frames share dims")
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub loss: LossWeights,
    pub seed: u64,
    /// Steps between checkpoint callbacks; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-4,
            steps: 20_000,
            loss: LossWeights::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    /// Mean batch loss of every step, evaluated before that step's update.
    pub losses: Vec<f64>,
}

pub fn train(dataset: &Dataset, params: ModelParams, config: &TrainConfig) -> Result<Trained> {
    train_with(dataset, params, config, |_, _, _| Ok(()))
}

/// Adam on uniformly drawn batches. `on_checkpoint(step, loss, params)` runs
/// after every `checkpoint_every`-th update (1-based step count).
pub fn train_with(
    dataset: &Dataset,
    mut params: ModelParams,
    config: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, f64, &ModelParams) -> Result<()>,
) -> Result<Trained> {
    config.validate()?;
    params.check()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&params.weights, config.learning_rate);
    let inv_batch = 1.0 / config.batch_size as f32;
    let mut losses = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut grads: Vec<Tensor<f32>> = params
            .weights
            .iter()
            .map(|w| Tensor::zeros(w.shape()))
            .collect();
        let mut batch_loss = 0.0f64;
        for _ in 0..config.batch_size {
            let i = rng.random_range(0..dataset.len());
            let sample = dataset.sample::<f32>(i);
            let mut g = Graph::<f32>::new();
            let vars = params.bind(&mut g, true);
            let input = g.constant(sample.input);
            let targets = LossTargets {
                current: g.constant(sample.current),
                next: g.constant(sample.next),
            };
            let out = forward(&mut g, &params.arch, &vars, input)?;
            let loss = total_loss(&mut g, params.variant, &out, &targets, &config.loss)?;
            let value = g.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            batch_loss += value;
            g.backward(loss)?;
            for (acc, &v) in grads.iter_mut().zip(&vars) {
                if let Some(gs) = g.grad_slice(v) {
                    for (a, &d) in acc.data_mut().iter_mut().zip(gs) {
                        *a += d * inv_batch;
                    }
                }
            }
        }
        let mean = batch_loss / config.batch_size as f64;
        if grads
            .iter()
            .any(|t| t.data().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteLoss { step });
        }
        adam.update(&mut params.weights, &grads)?;
        losses.push(mean);
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            on_checkpoint(step + 1, mean, &params)?;
        }
    }
    Ok(Trained { params, losses })
}
