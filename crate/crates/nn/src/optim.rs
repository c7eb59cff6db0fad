use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Learning-rate schedule applied on top of [`AdamConfig::lr`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup to the base rate, then decay proportional to
    /// `1 / sqrt(step)`.
    InverseSqrt { warmup_updates: u64 },
}

impl LrSchedule {
    /// Rate for the 1-based update `step`.
    pub fn rate(&self, base: f64, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::InverseSqrt { warmup_updates } => {
                let w = warmup_updates.max(1) as f64;
                let s = step.max(1) as f64;
                base * (s / w).min((w / s).sqrt())
            }
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = |p: &crate::params::Parameter<T>| Tensor::zeros(p.value.shape());
        Self {
            config,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    /// Rebuilds optimizer state read back from a checkpoint.
    pub fn from_parts(config: AdamConfig, first: Vec<Tensor<T>>, second: Vec<Tensor<T>>, step: u64) -> Result<Self> {
        if first.len() != second.len() {
            return Err(NnError::InvalidArgument("moment count mismatch".into()));
        }
        Ok(Self {
            config,
            first,
            second,
            step,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first, &self.second)
    }

    /// Applies one update with learning rate `lr` using the gradients
    /// currently accumulated in `params`. Non-finite gradients abort the
    /// update and leave both parameters and state untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if self.first.len() != params.len() {
            return Err(NnError::InvalidArgument(format!(
                "optimizer tracks {} tensors, store has {}",
                self.first.len(),
                params.len()
            )));
        }
        if !params.grads_finite() {
            return Err(NnError::NonFinite { op: "adam_step" });
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let c1 = T::lit(1.0 - b1.powi(t));
        let c2 = T::lit(1.0 - b2.powi(t));
        let (b1, b2) = (T::lit(b1), T::lit(b2));
        let eps = T::lit(self.config.eps);
        let lr = T::lit(lr);
        for ((p, m), v) in params.iter_mut().zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for (((w, &g), mi), vi) in value.iter_mut().zip(grad).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::full(&[1], value));
        s.grad_mut(id).fill(grad);
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = one_param(0.5, 0.0);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.step(&mut s, 0.001).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data(), &[0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        for g in [3.0, -0.25] {
            let mut s = one_param(1.0, g);
            let mut adam = Adam::new(AdamConfig::default(), &s);
            adam.step(&mut s, 0.001).unwrap();
            let w = s.iter().next().unwrap().value.data()[0];
            assert!((w - (1.0 - 0.001 * f64::signum(g))).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut s = one_param(1.0, f64::NAN);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        assert!(adam.step(&mut s, 0.001).is_err());
        assert_eq!(adam.step_count(), 0);
        assert_eq!(s.iter().next().unwrap().value.data(), &[1.0]);
    }

    #[test]
    fn inverse_sqrt_schedule_peaks_at_warmup() {
        let s = LrSchedule::InverseSqrt { warmup_updates: 100 };
        assert!((s.rate(1e-3, 50) - 5e-4).abs() < 1e-12);
        assert!((s.rate(1e-3, 100) - 1e-3).abs() < 1e-12);
        assert!((s.rate(1e-3, 400) - 5e-4).abs() < 1e-12);
        assert_eq!(LrSchedule::Constant.rate(1e-3, 12345), 1e-3);
    }
}
