//! Central-difference gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compare reverse-mode gradients of the scalar function `f` against
/// central differences with step `h`, over every element of every input.
pub fn grad_check<F>(name: &str, inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out);
        if !v.is_scalar() {
            return Err(Error::NonScalarRoot(v.shape().to_vec()));
        }
        let v = v.item();
        if !v.is_finite() {
            return Err(Error::NonFinite {
                op: name.to_string(),
            });
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if !g.value(out).item().is_finite() {
        return Err(Error::NonFinite {
            op: name.to_string(),
        });
    }
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x0 = input.data()[j];
            probe[i].data_mut()[j] = x0 + h;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = x0 - h;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: rel,
                    worst_input: i,
                    worst_index: j,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

/// Reduce a tensor-valued node to a scalar through a fixed random projection
/// with weights in [-1, 1].
pub fn project<T: super::Real>(g: &mut Graph<T>, v: Var, seed: u64) -> Var {
    let shape = g.value(v).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_fn(&shape, |_| T::lit(rng.random_range(-1.0..1.0)));
    let w = g.constant(w);
    let p = g.mul(v, w).expect("same shape");
    g.sum(p)
}
