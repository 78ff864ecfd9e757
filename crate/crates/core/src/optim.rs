//! Adam with bias correction, plus the learning-rate schedules the training
//! loops use.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ModelWeights;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub struct Adam<S: Scalar = f32> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<S>>,
    v: BTreeMap<String, Vec<S>>,
}

impl<S: Scalar> Default for Adam<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Adam<S> {
    pub fn new() -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over every non-buffer parameter present in
    /// `grads`. Moment tensors are zero-initialized on first sight.
    pub fn step(
        &mut self,
        params: &mut ModelWeights<S>,
        grads: &BTreeMap<String, Vec<S>>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one_minus_b1 = S::from_f64(1.0 - self.beta1);
        let one_minus_b2 = S::from_f64(1.0 - self.beta2);

        for (name, grad) in grads {
            if ModelWeights::<S>::is_buffer(name) {
                continue;
            }
            let current = params.get(name)?;
            if current.numel() != grad.len() {
                return Err(Error::contract(format!(
                    "gradient for `{name}` has {} values, parameter has {}",
                    grad.len(),
                    current.numel()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![S::ZERO; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![S::ZERO; grad.len()]);
            if m.len() != grad.len() {
                return Err(Error::contract(format!(
                    "optimizer state for `{name}` drifted from {} to {} values",
                    m.len(),
                    grad.len()
                )));
            }

            let mut data = current.data().to_vec();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_minus_b1 * g;
                v[i] = b2 * v[i] + one_minus_b2 * g * g;
                let m_hat = m[i].to_f64() / bc1;
                let v_hat = v[i].to_f64() / bc2;
                let update = lr * m_hat / (v_hat.sqrt() + self.eps);
                data[i] = S::from_f64(data[i].to_f64() - update);
            }
            let shape = current.shape().to_vec();
            params.update(name, Tensor::new(shape, data)?)?;
        }
        Ok(())
    }
}

/// Learning-rate schedule described as an initial rate plus a decay rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: LrDecay,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LrDecay {
    Constant,
    /// Switch to `lr` once `at_step` updates have completed.
    DropAt {
        at_step: usize,
        lr: f64,
    },
    /// Multiply by `factor` every `interval` updates.
    FactorEvery {
        interval: usize,
        factor: f64,
    },
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            decay: LrDecay::Constant,
        }
    }

    /// Default decomposition-training schedule: drop to a tenth of the
    /// initial rate after four fifths of the updates.
    pub fn drop_late(initial: f64, total_updates: usize) -> Self {
        Self {
            initial,
            decay: LrDecay::DropAt {
                at_step: total_updates * 4 / 5,
                lr: initial / 10.0,
            },
        }
    }

    /// Default reconstruction-training schedule: halve every fifth of the
    /// updates.
    pub fn halve_periodically(initial: f64, total_updates: usize) -> Self {
        Self {
            initial,
            decay: LrDecay::FactorEvery {
                interval: (total_updates / 5).max(1),
                factor: 0.5,
            },
        }
    }

    /// Rate used for update number `step` (0-based).
    pub fn at(&self, step: usize) -> f64 {
        match &self.decay {
            LrDecay::Constant => self.initial,
            LrDecay::DropAt { at_step, lr } => {
                if step >= *at_step {
                    *lr
                } else {
                    self.initial
                }
            }
            LrDecay::FactorEvery { interval, factor } => {
                self.initial * factor.powi((step / interval) as i32)
            }
        }
    }
}
