//! Redundancy prediction for the inverse pass.
//!
//! The forward network emits a redundancy channel alongside the watermarked
//! spectrogram. It is discarded, so decoding has to guess it: either with a
//! learned residual conv stack applied to the received spectrogram, or with
//! plain Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, Var};
use crate::dsp::Spectrogram;
use crate::error::Result;
use crate::inn::LEAKY_SLOPE;
use crate::params::{Bound, Conv2d, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictConfig {
    pub hidden: usize,
    pub blocks: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { hidden: 16, blocks: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ResBlock {
    a: Conv2d,
    b: Conv2d,
}

/// Stem 3x3 conv, residual blocks, zero-initialized 1x1 head.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictParams {
    stem: Conv2d,
    blocks: Vec<ResBlock>,
    head: Conv2d,
}

impl PredictParams {
    pub fn new(set: &mut ParamSet, cfg: &PredictConfig, channels: usize, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        let stem = Conv2d::new(set, "predict.stem", channels, h, 3, rng);
        let blocks = (0..cfg.blocks)
            .map(|i| ResBlock {
                a: Conv2d::new(set, &format!("predict.res{i}.a"), h, h, 3, rng),
                b: Conv2d::new(set, &format!("predict.res{i}.b"), h, h, 3, rng),
            })
            .collect();
        let head = Conv2d::zeroed(set, "predict.head", h, channels, 1);
        PredictParams { stem, blocks, head }
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let slope = T::of(LEAKY_SLOPE);
        let mut h = self.stem.forward(p, x)?;
        for blk in &self.blocks {
            let r = blk.a.forward(p, h)?.leaky_relu(slope);
            h = h.add(blk.b.forward(p, r)?)?;
        }
        self.head.forward(p, h)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.stem.ids().to_vec();
        for blk in &self.blocks {
            ids.extend(blk.a.ids());
            ids.extend(blk.b.ids());
        }
        ids.extend(self.head.ids());
        ids
    }
}

/// Learned redundancy estimate for a received spectrogram.
pub fn predict(x_wm_f: &Spectrogram, params: &PredictParams, set: &ParamSet) -> Result<Spectrogram> {
    let g = Graph::<f32>::new();
    let p = set.bind(&g, false);
    let out = params.forward(&p, g.constant(x_wm_f.tensor().clone()))?;
    Spectrogram::new(Tensor::clone(&out.value()))
}

/// Standard normal redundancy of the given shape.
pub fn gaussian_redundancy(rng: &mut impl Rng, bins: usize, frames: usize) -> Spectrogram {
    let t = Tensor::from_fn(&[2, bins, frames], |_| StandardNormal.sample(rng));
    Spectrogram::new(t).expect("shape is (2, F, T)")
}
