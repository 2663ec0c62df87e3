//! Named parameter store with Adam updates.

use super::tape::Gradients;
use super::tensor::{Elem, Tensor};
use crate::error::{Error, Result};

/// One trainable tensor plus its gradient and Adam moments, all shape-matched.
pub struct ParamEntry<E: Elem> {
    pub name: String,
    pub value: Tensor<E>,
    pub grad: Tensor<E>,
    pub m: Tensor<E>,
    pub v: Tensor<E>,
}

pub struct ParamStore<E: Elem = f32> {
    entries: Vec<ParamEntry<E>>,
    step: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl<E: Elem> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> ParamStore<E> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), step: 0 }
    }

    /// Registers a parameter; returns its slot for tape leasing.
    pub fn add(&mut self, name: &str, value: Tensor<E>) -> usize {
        debug_assert!(
            !self.entries.iter().any(|e| e.name == name),
            "duplicate parameter name {name}"
        );
        let shape = value.shape().to_vec();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn entry(&self, slot: usize) -> &ParamEntry<E> {
        &self.entries[slot]
    }

    pub fn entries(&self) -> &[ParamEntry<E>] {
        &self.entries
    }

    pub fn value(&self, slot: usize) -> &Tensor<E> {
        &self.entries[slot].value
    }

    pub fn value_mut(&mut self, slot: usize) -> &mut Tensor<E> {
        &mut self.entries[slot].value
    }

    pub fn grad(&self, slot: usize) -> &Tensor<E> {
        &self.entries[slot].grad
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Adds tape gradients into the store (call once per batch element).
    pub fn accumulate(&mut self, grads: &Gradients<E>) {
        for (slot, g) in grads.iter() {
            self.entries[slot].grad.add_assign_tensor(g);
        }
    }

    pub fn scale_grads(&mut self, c: E) {
        for e in &mut self.entries {
            e.grad.scale_in_place(c);
        }
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad = Tensor::zeros(e.value.shape());
        }
    }

    /// Standard Adam with bias correction. Gradients are zeroed afterwards and
    /// the step count incremented.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if cfg.lr <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "adam learning rate must be positive, got {}",
                cfg.lr
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let b1 = E::from_f64(cfg.beta1);
        let b2 = E::from_f64(cfg.beta2);
        let one = E::one();
        let bc1 = E::from_f64(1.0 - cfg.beta1.powi(t as i32));
        let bc2 = E::from_f64(1.0 - cfg.beta2.powi(t as i32));
        let lr = E::from_f64(cfg.lr);
        let eps = E::from_f64(cfg.eps);
        for e in &mut self.entries {
            for i in 0..e.value.numel() {
                let g = e.grad.data()[i];
                let m = b1 * e.m.data()[i] + (one - b1) * g;
                let v = b2 * e.v.data()[i] + (one - b2) * g * g;
                e.m.data_mut()[i] = m;
                e.v.data_mut()[i] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                let w = &mut e.value.data_mut()[i];
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
            e.grad = Tensor::zeros(e.value.shape());
        }
        Ok(())
    }

    pub fn to_f64_store(&self) -> ParamStore<f64> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.add(&e.name, e.value.to_f64_tensor());
        }
        out
    }
}
