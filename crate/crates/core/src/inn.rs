//! Key-gated invertible coupling network.
//!
//! Block `i` maps `(x, wm)` to
//!
//! ```text
//! x'  = x + phi(wm) * k_i
//! wm' = wm * exp(alpha(rho(x'))) + eta(x')
//! ```
//!
//! and is inverted in closed form by
//!
//! ```text
//! wm = (wm' - eta(x')) * exp(-alpha(rho(x')))
//! x  = x' - phi(wm) * k_i
//! ```
//!
//! where `alpha(t) = c * (2 / pi) * atan(t)`. When `k_i = 0` the additive
//! update is skipped entirely, so the x-channel passes through bit-exactly.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::codec::KeyBits;
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::params::{Bound, Conv2d, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Bounded odd clamp `c * (2 / pi) * atan(t)`, with range `(-c, c)`.
pub fn clamp_alpha<'g, T: Scalar>(t: Var<'g, T>, c: f64) -> Var<'g, T> {
    t.atan().scale(T::of(c * 2.0 / std::f64::consts::PI))
}

/// Scalar version of [`clamp_alpha`].
pub fn clamp_value(t: f64, c: f64) -> f64 {
    c * 2.0 / std::f64::consts::PI * t.atan()
}

/// Densely connected conv stack: `depth - 1` 3x3 layers, each fed the channel
/// concatenation of the input and every previous output, then a zero-initialized
/// 1x1 projection back to `channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSubnet {
    pub layers: Vec<Conv2d>,
    pub proj: Conv2d,
}

impl DenseSubnet {
    pub fn new(
        set: &mut ParamSet,
        name: &str,
        channels: usize,
        growth: usize,
        depth: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(depth >= 2, "dense subnet needs at least one hidden layer");
        let layers = (0..depth - 1)
            .map(|i| Conv2d::new(set, &format!("{name}.conv{i}"), channels + i * growth, growth, 3, rng))
            .collect();
        let proj = Conv2d::zeroed(
            set,
            &format!("{name}.proj"),
            channels + (depth - 1) * growth,
            channels,
            1,
        );
        DenseSubnet { layers, proj }
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut features = vec![x];
        for layer in &self.layers {
            let input = Var::concat(&features)?;
            features.push(layer.forward(p, input)?.leaky_relu(T::of(LEAKY_SLOPE)));
        }
        self.proj.forward(p, Var::concat(&features)?)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers.iter().chain([&self.proj]).flat_map(|c| c.ids()).collect()
    }
}

/// The three transformations of one coupling block.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingBlock {
    pub phi: DenseSubnet,
    pub rho: DenseSubnet,
    pub eta: DenseSubnet,
}

impl CouplingBlock {
    pub fn new(
        set: &mut ParamSet,
        name: &str,
        channels: usize,
        growth: usize,
        depth: usize,
        rng: &mut impl Rng,
    ) -> Self {
        CouplingBlock {
            phi: DenseSubnet::new(set, &format!("{name}.phi"), channels, growth, depth, rng),
            rho: DenseSubnet::new(set, &format!("{name}.rho"), channels, growth, depth, rng),
            eta: DenseSubnet::new(set, &format!("{name}.eta"), channels, growth, depth, rng),
        }
    }

    pub fn forward<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        wm: Var<'g, T>,
        gate: u8,
        clamp: f64,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        if x.shape() != wm.shape() {
            return Err(Error::shape("coupling forward", &x.shape(), &wm.shape()));
        }
        let x_next = if gate == 1 { x.add(self.phi.forward(p, wm)?)? } else { x };
        let log_scale = clamp_alpha(self.rho.forward(p, x_next)?, clamp);
        let wm_next = wm.mul(log_scale.exp())?.add(self.eta.forward(p, x_next)?)?;
        Ok((x_next, wm_next))
    }

    pub fn backward<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        x_next: Var<'g, T>,
        wm_next: Var<'g, T>,
        gate: u8,
        clamp: f64,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        if x_next.shape() != wm_next.shape() {
            return Err(Error::shape("coupling backward", &x_next.shape(), &wm_next.shape()));
        }
        let log_scale = clamp_alpha(self.rho.forward(p, x_next)?, clamp);
        let wm = wm_next.sub(self.eta.forward(p, x_next)?)?.mul(log_scale.neg().exp())?;
        let x = if gate == 1 {
            x_next.sub(self.phi.forward(p, wm)?)?
        } else {
            x_next
        };
        Ok((x, wm))
    }

    pub fn ids(&self) -> Vec<ParamId> {
        [&self.phi, &self.rho, &self.eta].iter().flat_map(|s| s.ids()).collect()
    }
}

/// Architecture knobs of the coupling network.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InnConfig {
    pub blocks: usize,
    pub growth: usize,
    pub depth: usize,
    pub clamp: f64,
}

impl Default for InnConfig {
    fn default() -> Self {
        InnConfig {
            blocks: 8,
            growth: 8,
            depth: 5,
            clamp: 2.0,
        }
    }
}

/// `N` coupling blocks composed over an `N`-bit key.
#[derive(Clone, Debug, PartialEq)]
pub struct InnParams {
    pub blocks: Vec<CouplingBlock>,
    pub clamp: f64,
}

impl InnParams {
    pub fn new(set: &mut ParamSet, cfg: &InnConfig, channels: usize, rng: &mut impl Rng) -> Self {
        InnParams {
            blocks: (0..cfg.blocks)
                .map(|i| CouplingBlock::new(set, &format!("inn.block{i}"), channels, cfg.growth, cfg.depth, rng))
                .collect(),
            clamp: cfg.clamp,
        }
    }

    pub fn key_len(&self) -> usize {
        self.blocks.len()
    }

    fn check_key(&self, key: &KeyBits) -> Result<()> {
        if key.len() != self.blocks.len() {
            return Err(Error::Length {
                what: "key",
                expected: self.blocks.len(),
                actual: key.len(),
            });
        }
        Ok(())
    }

    /// Blocks `1..=N` in order; returns `(x_out, wm_out)`.
    pub fn forward<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        wm: Var<'g, T>,
        key: &KeyBits,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        Ok(self
            .forward_trace(p, x, wm, key)?
            .pop()
            .expect("at least the input state"))
    }

    /// Every intermediate state, starting with the input pair.
    pub fn forward_trace<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        wm: Var<'g, T>,
        key: &KeyBits,
    ) -> Result<Vec<(Var<'g, T>, Var<'g, T>)>> {
        self.check_key(key)?;
        let mut states = vec![(x, wm)];
        for (block, gate) in self.blocks.iter().zip(key.bits()) {
            let (x, wm) = *states.last().unwrap();
            states.push(block.forward(p, x, wm, *gate, self.clamp)?);
        }
        Ok(states)
    }

    /// Blocks `N..=1` inverted in reverse order.
    pub fn backward<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        wm: Var<'g, T>,
        key: &KeyBits,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        self.check_key(key)?;
        let (mut x, mut wm) = (x, wm);
        for (block, gate) in self.blocks.iter().zip(key.bits()).rev() {
            (x, wm) = block.backward(p, x, wm, *gate, self.clamp)?;
        }
        Ok((x, wm))
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.blocks.iter().flat_map(|b| b.ids()).collect()
    }
}

fn spec_pair<'g>(g: &'g Graph<f32>, a: &Spectrogram, b: &Spectrogram) -> Result<(Var<'g, f32>, Var<'g, f32>)> {
    if a.tensor().shape() != b.tensor().shape() {
        return Err(Error::shape("spectrogram pair", a.tensor().shape(), b.tensor().shape()));
    }
    Ok((g.constant(a.tensor().clone()), g.constant(b.tensor().clone())))
}

fn to_specs(x: Var<'_, f32>, wm: Var<'_, f32>) -> Result<(Spectrogram, Spectrogram)> {
    Ok((
        Spectrogram::new(Tensor::clone(&x.value()))?,
        Spectrogram::new(Tensor::clone(&wm.value()))?,
    ))
}

/// Evaluates the full forward map on concrete spectrograms.
pub fn inn_forward(
    x_f: &Spectrogram,
    wm_f: &Spectrogram,
    key: &KeyBits,
    inn: &InnParams,
    set: &ParamSet,
) -> Result<(Spectrogram, Spectrogram)> {
    let g = Graph::new();
    let p = set.bind(&g, false);
    let (x, wm) = spec_pair(&g, x_f, wm_f)?;
    let (x, wm) = inn.forward(&p, x, wm, key)?;
    to_specs(x, wm)
}

/// Evaluates the full inverse map on concrete spectrograms.
pub fn inn_backward(
    x_wm_f: &Spectrogram,
    wm_pre: &Spectrogram,
    key: &KeyBits,
    inn: &InnParams,
    set: &ParamSet,
) -> Result<(Spectrogram, Spectrogram)> {
    let g = Graph::new();
    let p = set.bind(&g, false);
    let (x, wm) = spec_pair(&g, x_wm_f, wm_pre)?;
    let (x, wm) = inn.backward(&p, x, wm, key)?;
    to_specs(x, wm)
}

/// One block applied to concrete spectrograms.
pub fn block_forward(
    x_f: &Spectrogram,
    wm_f: &Spectrogram,
    gate: u8,
    block: &CouplingBlock,
    clamp: f64,
    set: &ParamSet,
) -> Result<(Spectrogram, Spectrogram)> {
    let g = Graph::new();
    let p = set.bind(&g, false);
    let (x, wm) = spec_pair(&g, x_f, wm_f)?;
    let (x, wm) = block.forward(&p, x, wm, gate, clamp)?;
    to_specs(x, wm)
}

/// Closed-form inverse of [`block_forward`].
pub fn block_backward(
    x_next: &Spectrogram,
    wm_next: &Spectrogram,
    gate: u8,
    block: &CouplingBlock,
    clamp: f64,
    set: &ParamSet,
) -> Result<(Spectrogram, Spectrogram)> {
    let g = Graph::new();
    let p = set.bind(&g, false);
    let (x, wm) = spec_pair(&g, x_next, wm_next)?;
    let (x, wm) = block.backward(&p, x, wm, gate, clamp)?;
    to_specs(x, wm)
}
