//! Adam over a subset of a [`ParamSet`].

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    ids: Vec<ParamId>,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(set: &ParamSet, ids: Vec<ParamId>, lr: f32) -> Self {
        let m: Vec<_> = ids.iter().map(|id| Tensor::zeros(set.get(*id).shape())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
            ids,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// First and second moment estimates, in the order of [`Adam::ids`].
    pub fn moments(&self) -> (&[Tensor<f32>], &[Tensor<f32>]) {
        (&self.m, &self.v)
    }

    pub fn moments_mut(&mut self) -> (&mut [Tensor<f32>], &mut [Tensor<f32>]) {
        (&mut self.m, &mut self.v)
    }

    /// One update; `grads[i]` belongs to `ids()[i]`.
    pub fn apply(&mut self, set: &mut ParamSet, grads: &[Tensor<f32>]) -> Result<()> {
        if grads.len() != self.ids.len() {
            return Err(Error::Length {
                what: "gradient list",
                expected: self.ids.len(),
                actual: grads.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for (k, id) in self.ids.iter().enumerate() {
            let p = set.get_mut(*id);
            if grads[k].shape() != p.shape() {
                return Err(Error::shape("adam", p.shape(), grads[k].shape()));
            }
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((w, g), m), v) in p.data_mut().iter_mut().zip(grads[k].data()).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Gradients restricted to this optimizer's parameters, from a full list.
    pub fn select(&self, all: &[Tensor<f32>]) -> Vec<Tensor<f32>> {
        self.ids.iter().map(|id| all[id.index()].clone()).collect()
    }
}
