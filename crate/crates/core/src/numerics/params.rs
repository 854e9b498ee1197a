use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::rng::Rng;

/// Named trainable tensors. Iteration is lexicographic by name, and every
/// entry is trainable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            entries: BTreeMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    /// Glorot-uniform `[fan_in x fan_out]` weight, drawn from a stream keyed
    /// by the store seed and the parameter name.
    pub fn init_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut rng = Rng::derive(self.seed, name);
        let data = (0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)).collect();
        self.insert(name, Tensor::from_parts(fan_in, fan_out, data));
    }

    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::zeros(&[rows, cols]));
    }

    pub fn init_ones(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::full(&[rows, cols], 1.0));
    }

    /// Copy with every value set to zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for t in out.entries.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        for (name, t) in &self.entries {
            match other.entries.get(name) {
                None => return Err(Error::MissingParam(name.clone())),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Shape {
                        op: "check_compatible",
                        detail: alloc::format!("`{}`: expected {:?}, found {:?}", name, t.shape(), o.shape()),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = other.entries.keys().find(|k| !self.entries.contains_key(*k)) {
            return Err(Error::Shape {
                op: "check_compatible",
                detail: alloc::format!("unexpected tensor `{extra}`"),
            });
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().map(ToString::to_string).collect()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

/// Gradients keyed like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grads {
    entries: BTreeMap<String, Tensor>,
}

impl Grads {
    pub fn insert(&mut self, name: String, g: Tensor) {
        self.entries.insert(name, g);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Elementwise accumulation; names missing here are adopted from `other`.
    pub fn accumulate(&mut self, other: &Grads) {
        for (name, g) in &other.entries {
            match self.entries.get_mut(name) {
                Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                None => {
                    self.entries.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        sqrt(self.entries.values().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>())
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.entries.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= c);
        }
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}
