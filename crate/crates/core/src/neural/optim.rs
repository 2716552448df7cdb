//! Adam with global-norm clipping and linear warmup, plus EMA weights.

use serde::{Deserialize, Serialize};

use super::denoiser::DenoiserParams;
use super::tensor::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate ramps linearly from 0 over this many steps.
    pub warmup_steps: u64,
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 5000,
            clip_norm: 1.0,
        }
    }
}

impl AdamConfig {
    /// Learning rate used on update number `step` (1-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.lr
        } else {
            self.lr * step as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Number of updates applied so far.
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub applied: bool,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clip_scale: f64,
    pub lr: f64,
}

pub fn global_norm<T: Scalar>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| {
            let v = v.to_f64();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: AdamConfig, params: &DenoiserParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors().iter().map(|t| vec![T::ZERO; t.tensor.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Clips `grads` to the configured global norm, then applies one
    /// bias-corrected Adam update. Non-finite gradients skip the step.
    pub fn adam_step(&mut self, params: &mut DenoiserParams<T>, grads: &[Vec<T>]) -> StepReport {
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter tensor");
        let grad_norm = global_norm(grads);
        if !grad_norm.is_finite() {
            return StepReport {
                applied: false,
                grad_norm,
                clip_scale: 0.0,
                lr: 0.0,
            };
        }
        let clip_scale = if grad_norm > self.config.clip_norm {
            self.config.clip_norm / grad_norm
        } else {
            1.0
        };
        self.step += 1;
        let c = &self.config;
        let lr = c.lr_at(self.step);
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let scale = T::from_f64(clip_scale);
        let step_size = T::from_f64(lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(c.eps);
        for (i, nt) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in nt.tensor.values_mut().iter_mut().enumerate() {
                let g = grads[i][j] * scale;
                m[j] = b1 * m[j] + ob1 * g;
                v[j] = b2 * v[j] + ob2 * g * g;
                let denom = (v[j] * inv_bc2).sqrt() + eps;
                *p -= step_size * m[j] / denom;
            }
        }
        StepReport {
            applied: true,
            grad_norm,
            clip_scale,
            lr,
        }
    }
}

/// Exponential moving average of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState<T> {
    pub rate: f64,
    pub shadow: DenoiserParams<T>,
}

impl<T: Scalar> EmaState<T> {
    pub fn new(params: &DenoiserParams<T>, rate: f64) -> Self {
        Self {
            rate,
            shadow: params.clone(),
        }
    }

    pub fn update(&mut self, params: &DenoiserParams<T>) {
        let rate = self.rate;
        self.update_with_rate(params, rate);
    }

    /// `shadow ← rate·shadow + (1−rate)·params`
    pub fn update_with_rate(&mut self, params: &DenoiserParams<T>, rate: f64) {
        assert!((0.0..1.0).contains(&rate), "EMA rate must lie in [0, 1)");
        let (r, or) = (T::from_f64(rate), T::from_f64(1.0 - rate));
        for (s, p) in self.shadow.tensors_mut().iter_mut().zip(params.tensors()) {
            for (a, &b) in s.tensor.values_mut().iter_mut().zip(p.tensor.values()) {
                *a = r * *a + or * b;
            }
        }
    }
}
