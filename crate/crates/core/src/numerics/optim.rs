//! AdamW with decoupled weight decay, and the cosine learning-rate schedule.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};
use crate::math::{cos, powi, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state: first/second moments per parameter and the step count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Decay is applied as
    /// `theta -= lr * wd * theta` before the adaptive step.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<()> {
        for (name, g) in grads.iter() {
            if !g.is_finite() {
                return Err(Error::NanGradient(name.clone()));
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - powi(c.beta1, self.step as i32);
        let bc2 = 1.0 - powi(c.beta2, self.step as i32);
        for (name, theta) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let mo = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            for (((t, &gi), m), v) in theta.data_mut().iter_mut().zip(g.data()).zip(&mut mo.m).zip(&mut mo.v) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *t -= lr * c.weight_decay * *t;
                *t -= lr * m_hat / (sqrt(v_hat) + c.eps);
            }
        }
        Ok(())
    }
}

/// `lr0 * 0.5 * (1 + cos(pi * t / t_max))`, clamped to `[0, t_max]`.
pub fn cosine_lr(lr0: f64, t: u64, t_max: u64) -> f64 {
    if t_max == 0 {
        return lr0;
    }
    let frac = (t.min(t_max)) as f64 / t_max as f64;
    lr0 * 0.5 * (1.0 + cos(core::f64::consts::PI * frac))
}
