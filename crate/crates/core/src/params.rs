//! Named parameter storage and per-graph binding.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor<f32>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<f32> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<f32> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.tensors
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// First parameter holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }

    /// Overwrites tensors by name; every name and shape must match.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for (i, (name, t)) in other.iter().enumerate() {
            if self.names[i] != name || self.tensors[i].shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: expected {} {:?}, found {name} {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    t.shape()
                )));
            }
            self.tensors[i] = t.clone();
        }
        Ok(())
    }

    /// Registers every tensor with a graph, converting to its element type.
    pub fn bind<'g, T: Scalar>(&self, g: &'g Graph<T>, trainable: bool) -> Bound<'g, T> {
        Bound {
            vars: self.tensors.iter().map(|t| g.leaf(t.cast(), trainable)).collect(),
        }
    }
}

/// A [`ParamSet`] registered with one graph.
pub struct Bound<'g, T: Scalar> {
    vars: Vec<Var<'g, T>>,
}

impl<'g, T: Scalar> Bound<'g, T> {
    pub fn var(&self, id: ParamId) -> Var<'g, T> {
        self.vars[id.0]
    }

    /// Replaces one bound tensor by another variable (used to probe gradients
    /// with respect to a single parameter).
    pub fn substitute(&mut self, id: ParamId, v: Var<'g, T>) {
        self.vars[id.0] = v;
    }

    /// Extracts gradients in parameter order; missing entries are zeros.
    pub fn gradients(&self, grads: &mut Gradients<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|v| grads.take(*v).unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual default for conv and linear layers.
pub fn uniform_fan_in(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<f32> {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

/// 2-D convolution layer with `k x k` kernel, stride 1, same padding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl Conv2d {
    pub fn new(set: &mut ParamSet, name: &str, c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Self {
        let fan_in = c_in * k * k;
        let weight = set.add(
            format!("{name}.weight"),
            uniform_fan_in(rng, &[c_out, c_in, k, k], fan_in),
        );
        let bias = set.add(format!("{name}.bias"), uniform_fan_in(rng, &[c_out], fan_in));
        Conv2d {
            weight,
            bias,
            c_in,
            c_out,
            k,
        }
    }

    /// Layer whose weights and bias start at exactly zero.
    pub fn zeroed(set: &mut ParamSet, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        let weight = set.add(format!("{name}.weight"), Tensor::zeros(&[c_out, c_in, k, k]));
        let bias = set.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Conv2d {
            weight,
            bias,
            c_in,
            c_out,
            k,
        }
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv2d(p.var(self.weight), p.var(self.bias))
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}
