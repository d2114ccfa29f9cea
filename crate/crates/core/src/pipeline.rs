//! Embedding and decoding procedures built from the codec, the coupling
//! network and the predict module.

use std::collections::HashSet;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::codec::{CodecParams, Decoded, KeyBits, WatermarkBits};
use crate::dsp::{AudioClip, StftConfig, StftPlan, CLIP_LEN};
use crate::error::{Error, Result};
use crate::inn::{InnConfig, InnParams};
use crate::losses::{DiscriminatorConfig, DiscriminatorParams};
use crate::params::{Bound, ParamId, ParamSet};
use crate::predict::{PredictConfig, PredictParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Architecture of a full model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub bits: usize,
    pub inn: InnConfig,
    pub predict: PredictConfig,
    pub discriminator: DiscriminatorConfig,
    pub codec_init_std: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            bits: 32,
            inn: InnConfig::default(),
            predict: PredictConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            codec_init_std: 0.01,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn key_len(&self) -> usize {
        self.inn.blocks
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::config("bits", "must be positive"));
        }
        if self.inn.blocks == 0 || self.inn.blocks > 63 {
            return Err(Error::config("inn.blocks", "must lie in 1..=63"));
        }
        if self.inn.growth == 0 || self.inn.depth < 2 {
            return Err(Error::config("inn.growth", "growth must be positive and depth >= 2"));
        }
        if !(self.inn.clamp > 0.0 && self.inn.clamp.is_finite()) {
            return Err(Error::config("inn.clamp", "must be positive"));
        }
        if self.predict.hidden == 0 {
            return Err(Error::config("predict.hidden", "must be positive"));
        }
        if self.discriminator.widths.contains(&0) {
            return Err(Error::config("discriminator.widths", "must be positive"));
        }
        if !(self.codec_init_std > 0.0 && self.codec_init_std.is_finite()) {
            return Err(Error::config("codec_init_std", "must be positive"));
        }
        Ok(())
    }
}

/// Every learned tensor plus the layout that interprets them.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub set: ParamSet,
    pub codec: CodecParams,
    pub inn: InnParams,
    pub predict: PredictParams,
    pub disc: DiscriminatorParams,
    plan: Rc<StftPlan<f32>>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.set == other.set
    }
}

/// How the discarded redundancy is replaced when decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Redundancy {
    Predict,
    Gaussian { seed: u64 },
}

impl ModelParams {
    /// Freshly initialized model; every final projection starts at zero so the
    /// coupling network and predict module begin as identity and zero maps.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut set = ParamSet::new();
        let codec = CodecParams::new(&mut set, config.bits, CLIP_LEN, config.codec_init_std, &mut rng);
        let inn = InnParams::new(&mut set, &config.inn, 2, &mut rng);
        let predict = PredictParams::new(&mut set, &config.predict, 2, &mut rng);
        let disc = DiscriminatorParams::new(&mut set, &config.discriminator, &mut rng);
        Ok(ModelParams {
            config,
            set,
            codec,
            inn,
            predict,
            disc,
            plan: Rc::new(StftPlan::new(StftConfig::pipeline())?),
        })
    }

    /// Model with the given tensors; names and shapes must match the layout.
    pub fn with_params(config: ModelConfig, set: &ParamSet) -> Result<Self> {
        let mut m = ModelParams::new(config)?;
        m.set.load_from(set)?;
        Ok(m)
    }

    pub fn key_len(&self) -> usize {
        self.inn.key_len()
    }

    pub fn plan(&self) -> &Rc<StftPlan<f32>> {
        &self.plan
    }

    /// Parameters updated by the generator objective.
    pub fn generator_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.codec.ids().to_vec();
        ids.extend(self.inn.ids());
        ids.extend(self.predict.ids());
        ids
    }

    pub fn check_key(&self, key: &KeyBits) -> Result<()> {
        if key.len() != self.key_len() {
            return Err(Error::Length {
                what: "key",
                expected: self.key_len(),
                actual: key.len(),
            });
        }
        Ok(())
    }

    /// Differentiable embedding of a one-second signal.
    pub fn embed_graph<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        plan: &Rc<StftPlan<T>>,
        x: Var<'g, T>,
        wm: &WatermarkBits,
        key: &KeyBits,
    ) -> Result<Var<'g, T>> {
        self.check_key(key)?;
        check_segment(x.shape().iter().product())?;
        let x_f = x.stft(plan)?;
        let wm_f = self.codec.encode(p, wm)?.stft(plan)?;
        let (x_wm_f, _redundancy) = self.inn.forward(p, x_f, wm_f, key)?;
        x_wm_f.istft(plan, CLIP_LEN)
    }

    /// Differentiable decoding of a one-second signal, returning logits.
    pub fn decode_graph<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        plan: &Rc<StftPlan<T>>,
        x_wm: Var<'g, T>,
        key: &KeyBits,
        source: Redundancy,
    ) -> Result<Var<'g, T>> {
        self.check_key(key)?;
        check_segment(x_wm.shape().iter().product())?;
        let x_f = x_wm.stft(plan)?;
        let wm_pre = match source {
            Redundancy::Predict => self.predict.forward(p, x_f)?,
            Redundancy::Gaussian { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shape = x_f.shape();
                x_f.graph()
                    .constant(Tensor::from_fn(&shape, |_| T::of(rng.sample::<f64, _>(StandardNormal))))
            }
        };
        let (_x_re, wm_f) = self.inn.backward(p, x_f, wm_pre, key)?;
        self.codec.decode(p, wm_f.istft(plan, CLIP_LEN)?)
    }

    fn embed_segment(&self, x: &[f32], wm: &WatermarkBits, key: &KeyBits) -> Result<Vec<f32>> {
        let g = Graph::<f32>::new();
        let p = self.set.bind(&g, false);
        let xv = g.constant(Tensor::from_parts(vec![x.len()], x.to_vec()));
        Ok(self.embed_graph(&p, &self.plan, xv, wm, key)?.value().data().to_vec())
    }

    fn decode_segment(&self, x: &[f32], key: &KeyBits, source: Redundancy) -> Result<Vec<f32>> {
        let g = Graph::<f32>::new();
        let p = self.set.bind(&g, false);
        let xv = g.constant(Tensor::from_parts(vec![x.len()], x.to_vec()));
        Ok(self
            .decode_graph(&p, &self.plan, xv, key, source)?
            .value()
            .data()
            .to_vec())
    }
}

fn check_segment(len: usize) -> Result<()> {
    if len != CLIP_LEN {
        return Err(Error::Length {
            what: "segment",
            expected: CLIP_LEN,
            actual: len,
        });
    }
    Ok(())
}

/// Segment boundaries for a clip of `len` samples: full one-second segments,
/// plus the trailing partial one if it is at least half a second long.
pub fn segments(len: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..len / CLIP_LEN)
        .map(|i| (i * CLIP_LEN, (i + 1) * CLIP_LEN))
        .collect();
    let rest = len % CLIP_LEN;
    if rest >= CLIP_LEN / 2 {
        out.push((len - rest, len));
    }
    out
}

fn padded(x: &[f32]) -> Vec<f32> {
    let mut v = x.to_vec();
    v.resize(CLIP_LEN, 0.0);
    v
}

fn check_clip(x: &AudioClip) -> Result<Vec<(usize, usize)>> {
    let segs = segments(x.len());
    if segs.is_empty() {
        return Err(Error::Length {
            what: "clip (at least half a second)",
            expected: CLIP_LEN / 2,
            actual: x.len(),
        });
    }
    Ok(segs)
}

/// Embeds `wm` under `key`. Longer clips are marked segment by segment.
pub fn embed(x: &AudioClip, wm: &WatermarkBits, key: &KeyBits, model: &ModelParams) -> Result<AudioClip> {
    model.check_key(key)?;
    let mut out = x.samples().to_vec();
    for (s, e) in check_clip(x)? {
        let marked = model.embed_segment(&padded(&x.samples()[s..e]), wm, key)?;
        out[s..e].copy_from_slice(&marked[..e - s]);
    }
    AudioClip::new(out, x.sample_rate())
}

/// Decodes with `key`; multi-segment clips are combined by per-bit majority
/// vote, with ties going to the sign of the summed logits.
pub fn decode(x_wm: &AudioClip, key: &KeyBits, model: &ModelParams, source: Redundancy) -> Result<Decoded> {
    model.check_key(key)?;
    let segs = check_clip(x_wm)?;
    let per: Vec<Vec<f32>> = segs
        .iter()
        .enumerate()
        .map(|(i, (s, e))| {
            let src = match source {
                Redundancy::Gaussian { seed } => Redundancy::Gaussian {
                    seed: seed.wrapping_add(i as u64),
                },
                other => other,
            };
            model.decode_segment(&padded(&x_wm.samples()[*s..*e]), key, src)
        })
        .collect::<Result<_>>()?;
    if per.len() == 1 {
        return Ok(Decoded::from_logits(per.into_iter().next().unwrap()));
    }
    let bits = model.config.bits;
    let n = per.len() as f32;
    let logits: Vec<f32> = (0..bits).map(|b| per.iter().map(|l| l[b]).sum::<f32>() / n).collect();
    let votes: Vec<u8> = (0..bits)
        .map(|b| {
            let ones = per.iter().filter(|l| l[b] > 0.0).count() * 2;
            match ones.cmp(&per.len()) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => (logits[b] > 0.0) as u8,
            }
        })
        .collect();
    Ok(Decoded {
        logits,
        bits: WatermarkBits::new(votes)?,
    })
}

/// Payload/key pairs embedded one after another.
#[derive(Clone, Debug, PartialEq)]
pub struct WatermarkStack {
    entries: Vec<(WatermarkBits, KeyBits)>,
}

impl WatermarkStack {
    pub fn new(entries: Vec<(WatermarkBits, KeyBits)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::config("watermark stack", "must not be empty"));
        }
        let mut seen = HashSet::new();
        for (_, k) in &entries {
            if !seen.insert(k.clone()) {
                return Err(Error::DuplicateKey(k.to_hex()));
            }
        }
        Ok(WatermarkStack { entries })
    }

    pub fn entries(&self) -> &[(WatermarkBits, KeyBits)] {
        &self.entries
    }
}

/// Left fold of [`embed`] over the stack.
pub fn embed_stack(x: &AudioClip, stack: &WatermarkStack, model: &ModelParams) -> Result<AudioClip> {
    stack
        .entries
        .iter()
        .try_fold(x.clone(), |acc, (wm, k)| embed(&acc, wm, k, model))
}
