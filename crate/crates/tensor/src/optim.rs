use serde::{Deserialize, Serialize};

use crate::{shape_err, Parameter, Real, TensorError};

/// AdamW hyperparameters. The learning rate is passed per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are indexed like the
/// parameter slice given to [`AdamW::new`].
#[derive(Debug, Clone)]
pub struct AdamW<T: Real> {
    pub hyper: AdamHyper,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(hyper: AdamHyper, params: &[Parameter<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.tensor.numel()]).collect();
        Self {
            hyper,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update with learning rate `lr`. Every parameter must carry a grad.
    pub fn step(&mut self, params: &[Parameter<T>], lr: f64) -> Result<(), TensorError> {
        if params.len() != self.m.len() {
            return Err(shape_err(
                "adamw",
                format!("{} params for {} moment buffers", params.len(), self.m.len()),
            ));
        }
        if let Some(p) = params.iter().find(|p| p.tensor.grad_ref().is_none()) {
            return Err(TensorError::MissingGrad(p.name.clone()));
        }
        self.step += 1;
        let h = self.hyper;
        let t = self.step as i32;
        let (b1, b2) = (T::of(h.beta1), T::of(h.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::of(1.0 - h.beta1.powi(t));
        let bc2 = T::of(1.0 - h.beta2.powi(t));
        let eps = T::of(h.eps);
        let lr = T::of(lr);
        for (i, p) in params.iter().enumerate() {
            let decay = if p.decay_exempt { T::zero() } else { T::of(h.weight_decay) };
            let grad = p.tensor.grad_ref();
            let g = grad.as_ref().expect("checked above");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            if m.len() != g.len() {
                return Err(shape_err("adamw", format!("moment size mismatch for {}", p.name)));
            }
            p.tensor.update_data(|theta| {
                for j in 0..theta.len() {
                    m[j] = b1 * m[j] + c1 * g[j];
                    v[j] = b2 * v[j] + c2 * g[j] * g[j];
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    theta[j] -= lr * (mhat / (vhat.sqrt() + eps) + decay * theta[j]);
                }
            });
        }
        Ok(())
    }
}

/// Exponential annealing `lr0 · gamma^epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub gamma: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { lr0: 0.01, gamma: 0.95 }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.gamma.powi(epoch as i32)
    }
}
