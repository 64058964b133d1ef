use super::{Real, Tensor};
use crate::error::{shape_mismatch, Result};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<T: Real> AdamState<T> {
    /// Zero moments shaped like `params`, with beta1 = 0.9, beta2 = 0.999 and
    /// epsilon = 1e-8.
    pub fn new(params: &[Tensor<T>], learning_rate: f64) -> Self {
        let zeros: Vec<_> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One update. Gradients are read, never cleared.
    pub fn update(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(shape_mismatch(
                "adam_step",
                &[self.first_moment.len()],
                &[params.len(), grads.len()],
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != m.shape() {
                return Err(shape_mismatch("adam_step", m.shape(), p.shape()));
            }
            if g.shape() != p.shape() {
                return Err(shape_mismatch("adam_step", p.shape(), g.shape()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bias1 = T::lit(1.0 - self.beta1.powi(t));
        let bias2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(self.learning_rate);
        let eps = T::lit(self.epsilon);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                let mhat = *m / bias1;
                let vhat = *v / bias2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
