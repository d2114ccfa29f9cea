//! Training loop: random single/double watermark steps, generator and
//! discriminator updates, checkpoints.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{random_attack, Attack, AttackConfig, Realized};
use crate::autodiff::{Graph, Var};
use crate::checkpoint::Checkpoint;
use crate::codec::{ber, sample_key, Decoded, KeyBits, WatermarkBits};
use crate::corpus::{toy_corpus, CorpusSpec};
use crate::dsp::{AudioClip, StftConfig, CLIP_LEN};
use crate::error::{Error, Result};
use crate::losses::{
    accuracy_graph, broadweight_vector, discriminator_graph, perceptual_graph, LossContext, LossWeights, MelScaleConfig,
};
use crate::optim::Adam;
use crate::params::ParamSet;
use crate::pipeline::{ModelConfig, ModelParams, Redundancy};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub lr_gen: f32,
    pub lr_disc: f32,
    /// Both rates follow a cosine from their initial value down to
    /// `lr * lr_floor` at the last step; 1 keeps them constant.
    pub lr_floor: f32,
    pub seed: u64,
    /// Probability that a step uses the single-watermark strategy.
    pub single_prob: f64,
    /// Fraction of samples decoded without any edit.
    pub na_prob: f64,
    /// Replace `log(1 - D)` by `-log D` in the generator objective.
    pub non_saturating: bool,
    /// Steps over which `w_t1` ramps up from 0; 0 applies it in full at once.
    pub perceptual_warmup: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
    pub weights: LossWeights,
    pub model: ModelConfig,
    pub corpus: CorpusSpec,
    /// Edits drawn for the remaining samples.
    pub attacks: Vec<Attack>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch: 4,
            lr_gen: 1e-4,
            lr_disc: 1e-4,
            lr_floor: 1.0,
            seed: 0,
            single_prob: 0.5,
            na_prob: 0.1,
            non_saturating: false,
            perceptual_warmup: 0,
            log_every: 50,
            checkpoint_every: 0,
            checkpoint_dir: None,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
            corpus: CorpusSpec::mixed(200),
            attacks: Attack::default_menu()
                .into_iter()
                .filter(|a| *a != Attack::NA)
                .collect(),
        }
    }
}

impl TrainConfig {
    /// Reduced-width desk-scale setup: 8 blocks of growth 2 and depth 3, a
    /// two-block predict module, batch 2, generator lr 1e-3 decaying to 5e-5,
    /// and a 500-step perceptual warm-up, on 200 synthetic clips.
    pub fn smoke() -> Self {
        TrainConfig {
            steps: 10_000,
            batch: 2,
            lr_gen: 1e-3,
            lr_disc: 1e-4,
            lr_floor: 0.05,
            perceptual_warmup: 500,
            log_every: 500,
            model: ModelConfig {
                inn: crate::inn::InnConfig {
                    blocks: 8,
                    growth: 2,
                    depth: 3,
                    clamp: 2.0,
                },
                predict: crate::predict::PredictConfig { hidden: 4, blocks: 2 },
                discriminator: crate::losses::DiscriminatorConfig { widths: [4, 8, 8] },
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Synthetic training clips, seeded from `seed` on a separate stream.
    pub fn build_corpus(&self) -> Result<Vec<AudioClip>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        toy_corpus(&self.corpus, &mut rng)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.model.validate()?;
        if self.batch == 0 {
            return Err(Error::config("batch", "must be positive"));
        }
        for (name, lr) in [("lr_gen", self.lr_gen), ("lr_disc", self.lr_disc)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= 1.0) {
            return Err(Error::config("lr_floor", "must lie in (0, 1]"));
        }
        for (name, p) in [("single_prob", self.single_prob), ("na_prob", self.na_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("{p} outside [0, 1]")));
            }
        }
        if self.attacks.is_empty() && self.na_prob < 1.0 {
            return Err(Error::config("attacks", "empty menu requires na_prob = 1"));
        }
        for a in &self.attacks {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Single,
    Double,
}

/// Logged scalar terms of one sample's objective.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTerms {
    /// `(l2, adversarial, mel)` per embedding; empty when `w_t1 = 0`.
    pub perceptual: Vec<[f64; 3]>,
    /// `(bce, bce_wrong)` per decoded payload.
    pub accuracy: Vec<[f64; 2]>,
    pub objective: f64,
    /// Same objective as evaluated by the f32 graph that was differentiated.
    pub graph_objective: f64,
    pub ber: Vec<f64>,
    pub wrong_ber: f64,
    pub attack: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub strategy: Strategy,
    /// Weights the objective of this step was computed with.
    pub weights: LossWeights,
    pub samples: Vec<SampleTerms>,
    pub loss: f64,
    pub d_loss: f64,
}

impl StepLog {
    pub fn mean_bce(&self) -> f64 {
        let all: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|s| s.accuracy.iter().map(|a| a[0]))
            .collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }

    pub fn mean_ber(&self) -> f64 {
        let all: Vec<f64> = self.samples.iter().flat_map(|s| s.ber.iter().copied()).collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }

    pub fn mean_wrong_ber(&self) -> f64 {
        self.samples.iter().map(|s| s.wrong_ber).sum::<f64>() / self.samples.len().max(1) as f64
    }
}

/// Random choices of one training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDraw {
    /// One or two `(payload, key)` pairs, embedded in order.
    pub marks: Vec<(WatermarkBits, KeyBits)>,
    pub wrong_key: KeyBits,
    pub attack: AttackConfig,
}

impl SampleDraw {
    fn validate(&self) -> Result<()> {
        let mut keys = HashSet::new();
        let mut payloads = HashSet::new();
        for (wm, k) in &self.marks {
            if !keys.insert(k.clone()) {
                return Err(Error::DuplicateKey(k.to_hex()));
            }
            if !payloads.insert(wm.bits().to_vec()) {
                return Err(Error::config("watermarks", "stacked payloads must differ"));
            }
        }
        if keys.contains(&self.wrong_key) {
            return Err(Error::config("wrong_key", "must differ from every embedding key"));
        }
        Ok(())
    }
}

struct SampleOutcome {
    grads: Vec<Tensor<f32>>,
    terms: SampleTerms,
    fake: Vec<f32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StrategyCounts {
    pub single: u64,
    pub double: u64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: ModelParams,
    pub opt_gen: Adam,
    pub opt_disc: Adam,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub counts: StrategyCounts,
    ctx: LossContext<f32>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    step: u64,
    counts: [u64; 2],
    adam_steps: [u64; 2],
    rng_seed: String,
    rng_stream: u64,
    rng_word_pos: String,
    train: TrainConfig,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return Err(Error::Checkpoint(format!("odd-length hex {s:?}")));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|e| Error::Checkpoint(format!("hex: {e}"))))
        .collect()
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = ModelParams::new(cfg.model.clone())?;
        let opt_gen = Adam::new(&model.set, model.generator_ids(), cfg.lr_gen);
        let opt_disc = Adam::new(&model.set, model.disc.ids(), cfg.lr_disc);
        let ctx = LossContext::new(
            StftConfig::pipeline(),
            &MelScaleConfig::default(),
            &broadweight_vector(CLIP_LEN, 0.03, 10.0, 1.0)?,
        )?;
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            model,
            opt_gen,
            opt_disc,
            step: 0,
            counts: StrategyCounts::default(),
            ctx,
        })
    }

    /// Loss weights at the current step, with `w_t1` ramped linearly from 0
    /// over the first `perceptual_warmup` steps.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.cfg.weights;
        if self.cfg.perceptual_warmup > 0 {
            w.w_t1 *= (self.step as f64 / self.cfg.perceptual_warmup as f64).min(1.0);
        }
        w
    }

    /// Multiplier on the initial learning rates for the next update.
    pub fn lr_factor(&self) -> f32 {
        let floor = self.cfg.lr_floor as f64;
        if floor >= 1.0 || self.cfg.steps <= 1 {
            return 1.0;
        }
        let t = (self.step as f64 / (self.cfg.steps - 1) as f64).min(1.0);
        (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())) as f32
    }

    fn fresh_key(&mut self, exclude: &HashSet<KeyBits>) -> Result<KeyBits> {
        let mut ex = exclude.clone();
        ex.insert(KeyBits::zeros(self.model.key_len()));
        sample_key(&mut self.rng, self.model.key_len(), &ex)
    }

    /// Draws payloads, distinct non-zero keys, a wrong key and an edit.
    pub fn draw(&mut self, strategy: Strategy) -> Result<SampleDraw> {
        let n = match strategy {
            Strategy::Single => 1,
            Strategy::Double => 2,
        };
        let mut keys = HashSet::new();
        let mut marks: Vec<(WatermarkBits, KeyBits)> = Vec::with_capacity(n);
        while marks.len() < n {
            let wm = WatermarkBits::random(&mut self.rng, self.model.config.bits);
            if marks.iter().any(|(w, _)| *w == wm) {
                continue;
            }
            let k = self.fresh_key(&keys)?;
            keys.insert(k.clone());
            marks.push((wm, k));
        }
        let wrong_key = self.fresh_key(&keys)?;
        let attack = if self.rng.gen_bool(self.cfg.na_prob) {
            AttackConfig::new(Attack::NA, self.rng.gen())
        } else {
            random_attack(&mut self.rng, &self.cfg.attacks)?
        };
        Ok(SampleDraw {
            marks,
            wrong_key,
            attack,
        })
    }

    /// Objective of one sample and its generator gradients.
    fn sample(&self, x: &AudioClip, draw: &SampleDraw) -> Result<SampleOutcome> {
        draw.validate()?;
        let w = &self.effective_weights();
        let m = &self.model;
        let g = Graph::<f32>::new();
        let p = m.set.bind(&g, true);
        let plan = &self.ctx.spec_plan;
        let xv = g.constant(Tensor::new(vec![x.len()], x.samples().to_vec())?);

        let mut marked: Vec<Var<'_, f32>> = Vec::with_capacity(draw.marks.len());
        let mut cur = xv;
        for (wm, k) in &draw.marks {
            cur = m.embed_graph(&p, plan, cur, wm, k)?;
            marked.push(cur);
        }
        let realized = Realized::new(&draw.attack, cur.value().data())?;
        let x_e = realized.apply_var(cur)?;

        // The hinge has zero gradient when inactive, so the wrong-key decode
        // only joins the graph when some payload is still decoded too well.
        let probe = {
            let g2 = Graph::<f32>::new();
            let p2 = m.set.bind(&g2, false);
            let xe = g2.constant(Tensor::clone(&x_e.value()));
            m.decode_graph(&p2, plan, xe, &draw.wrong_key, Redundancy::Predict)?
                .value()
                .data()
                .to_vec()
        };
        let hinge_active = w.w_l1 > 0.0
            && draw.marks.iter().any(|(wm, _)| {
                let y = wm.targets::<f64>();
                let bce = probe
                    .iter()
                    .zip(&y)
                    .map(|(z, y)| softplus(*z as f64) - y * *z as f64)
                    .sum::<f64>()
                    / y.len() as f64;
                bce < w.w_l2
            });
        let wrong = if hinge_active {
            m.decode_graph(&p, plan, x_e, &draw.wrong_key, Redundancy::Predict)?
        } else {
            g.constant(Tensor::new(vec![probe.len()], probe.clone())?)
        };
        let wrong_ber = ber(&draw.marks[0].0, &Decoded::from_logits(probe).bits)?;

        let mut accuracy = Vec::new();
        let mut bers = Vec::new();
        let mut la_sum: Option<Var<'_, f32>> = None;
        for (wm, k) in &draw.marks {
            let logits = m.decode_graph(&p, plan, x_e, k, Redundancy::Predict)?;
            bers.push(ber(wm, &Decoded::from_logits(logits.value().data().to_vec()).bits)?);
            let t = accuracy_graph(wm, logits, wrong, w)?;
            accuracy.push([t.bce.value().item() as f64, t.bce_wrong.value().item() as f64]);
            la_sum = Some(match la_sum {
                Some(s) => s.add(t.total)?,
                None => t.total,
            });
        }
        let mut objective = la_sum.expect("at least one mark").scale(w.w_t2 as f32);

        let mut perceptual = Vec::new();
        if w.w_t1 != 0.0 {
            for x_wm in &marked {
                let t = perceptual_graph(&self.ctx, &m.disc, &p, xv, *x_wm, w, self.cfg.non_saturating)?;
                perceptual.push([
                    t.l2.value().item() as f64,
                    t.adversarial.value().item() as f64,
                    t.mel.value().item() as f64,
                ]);
                objective = objective.add(t.total.scale(w.w_t1 as f32))?;
            }
        }
        let graph_value = objective.value().item() as f64;
        // Scalar objective in f64 from the logged terms; the f32 graph value
        // agrees with it up to single-precision accumulation error.
        let lp: f64 = perceptual
            .iter()
            .map(|[a, b, c]| w.w_p1 * a + w.w_p2 * b + w.w_p3 * c)
            .sum();
        let la: f64 = accuracy.iter().map(|[b, bw]| b + w.w_l1 * (w.w_l2 - bw).max(0.0)).sum();
        let value = w.w_t1 * lp + w.w_t2 * la;
        if !value.is_finite() || !graph_value.is_finite() {
            return Err(Error::NonFinite {
                step: self.step + 1,
                what: format!("generator objective {value}"),
            });
        }
        let mut grads = g.backward(objective)?;
        let all = p.gradients(&mut grads);
        Ok(SampleOutcome {
            grads: self.opt_gen.select(&all),
            terms: SampleTerms {
                perceptual,
                accuracy,
                objective: value,
                graph_objective: graph_value,
                ber: bers,
                wrong_ber,
                attack: draw.attack.attack.name(),
            },
            fake: cur.value().data().to_vec(),
        })
    }

    fn discriminator_grads(&self, real: &AudioClip, fake: Vec<f32>) -> Result<(f64, Vec<Tensor<f32>>)> {
        let g = Graph::<f32>::new();
        let p = self.model.set.bind(&g, true);
        let r = g.constant(Tensor::new(vec![real.len()], real.samples().to_vec())?);
        let f = g.constant(Tensor::new(vec![fake.len()], fake)?);
        let loss = discriminator_graph(&self.ctx, &self.model.disc, &p, r, f)?;
        let v = loss.value().item() as f64;
        let mut grads = g.backward(loss)?;
        Ok((v, self.opt_disc.select(&p.gradients(&mut grads))))
    }

    fn mean_into(acc: &mut Option<Vec<Tensor<f32>>>, g: Vec<Tensor<f32>>) {
        match acc {
            None => *acc = Some(g),
            Some(a) => a
                .iter_mut()
                .zip(&g)
                .for_each(|(a, g)| a.data_mut().iter_mut().zip(g.data()).for_each(|(a, g)| *a += g)),
        }
    }

    /// One optimizer step on the given clips with explicit draws.
    pub fn step_with(&mut self, clips: &[AudioClip], draws: &[SampleDraw]) -> Result<StepLog> {
        if clips.is_empty() || clips.len() != draws.len() {
            return Err(Error::Length {
                what: "draws per clip",
                expected: clips.len(),
                actual: draws.len(),
            });
        }
        let strategy = if draws[0].marks.len() == 1 {
            Strategy::Single
        } else {
            Strategy::Double
        };
        let weights = self.effective_weights();
        let scale = 1.0 / clips.len() as f32;
        let mut gen: Option<Vec<Tensor<f32>>> = None;
        let mut outcomes = Vec::with_capacity(clips.len());
        for (x, d) in clips.iter().zip(draws) {
            let mut o = self.sample(x, d)?;
            Self::mean_into(&mut gen, std::mem::take(&mut o.grads));
            outcomes.push(o);
        }
        let mut gen = gen.expect("non-empty batch");
        gen.iter_mut()
            .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= scale));

        let mut disc: Option<Vec<Tensor<f32>>> = None;
        let mut d_loss = 0.0;
        for (x, o) in clips.iter().zip(&mut outcomes) {
            let (v, g) = self.discriminator_grads(x, std::mem::take(&mut o.fake))?;
            d_loss += v / clips.len() as f64;
            Self::mean_into(&mut disc, g);
        }
        let mut disc = disc.expect("non-empty batch");
        disc.iter_mut()
            .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= scale));

        let f = self.lr_factor();
        self.opt_gen.lr = self.cfg.lr_gen * f;
        self.opt_disc.lr = self.cfg.lr_disc * f;
        self.step += 1;
        self.opt_gen.apply(&mut self.model.set, &gen)?;
        self.opt_disc.apply(&mut self.model.set, &disc)?;
        if let Some(name) = self.model.set.first_non_finite() {
            return Err(Error::NonFinite {
                step: self.step,
                what: format!("parameter {name}"),
            });
        }
        match strategy {
            Strategy::Single => self.counts.single += 1,
            Strategy::Double => self.counts.double += 1,
        }
        let samples: Vec<SampleTerms> = outcomes.into_iter().map(|o| o.terms).collect();
        let loss = samples.iter().map(|s| s.objective).sum::<f64>() / samples.len() as f64;
        Ok(StepLog {
            step: self.step,
            strategy,
            weights,
            samples,
            loss,
            d_loss,
        })
    }

    /// Single-watermark step with random draws.
    pub fn train_step_single(&mut self, clips: &[AudioClip]) -> Result<StepLog> {
        let draws = (0..clips.len())
            .map(|_| self.draw(Strategy::Single))
            .collect::<Result<Vec<_>>>()?;
        self.step_with(clips, &draws)
    }

    /// Double-watermark step with random draws.
    pub fn train_step_double(&mut self, clips: &[AudioClip]) -> Result<StepLog> {
        let draws = (0..clips.len())
            .map(|_| self.draw(Strategy::Double))
            .collect::<Result<Vec<_>>>()?;
        self.step_with(clips, &draws)
    }

    /// Draws a strategy and a batch from the corpus, then steps.
    pub fn step(&mut self, corpus: &[AudioClip]) -> Result<StepLog> {
        if corpus.is_empty() {
            return Err(Error::config("corpus", "must not be empty"));
        }
        let strategy = if self.rng.gen_bool(self.cfg.single_prob) {
            Strategy::Single
        } else {
            Strategy::Double
        };
        let clips: Vec<AudioClip> = (0..self.cfg.batch)
            .map(|_| corpus[self.rng.gen_range(0..corpus.len())].clone())
            .collect();
        match strategy {
            Strategy::Single => self.train_step_single(&clips),
            Strategy::Double => self.train_step_double(&clips),
        }
    }

    /// Runs until `cfg.steps`, logging and checkpointing periodically.
    pub fn run(&mut self, corpus: &[AudioClip], mut on_log: impl FnMut(&StepLog)) -> Result<()> {
        let start = Instant::now();
        let mut window: Vec<StepLog> = Vec::new();
        while self.step < self.cfg.steps {
            let log = self.step(corpus)?;
            on_log(&log);
            window.push(log);
            let every = self.cfg.log_every.max(1);
            if self.step.is_multiple_of(every) || self.step == self.cfg.steps {
                let n = window.len() as f64;
                log::info!(
                    "step {} ({:.0}s): loss {:.4} bce {:.4} ber {:.2}% wrong-key ber {:.2}% d_loss {:.4}",
                    self.step,
                    start.elapsed().as_secs_f64(),
                    window.iter().map(|l| l.loss).sum::<f64>() / n,
                    window.iter().map(|l| l.mean_bce()).sum::<f64>() / n,
                    window.iter().map(|l| l.mean_ber()).sum::<f64>() / n,
                    window.iter().map(|l| l.mean_wrong_ber()).sum::<f64>() / n,
                    window.iter().map(|l| l.d_loss).sum::<f64>() / n,
                );
                window.clear();
            }
            if let Some(dir) = &self.cfg.checkpoint_dir {
                if self.cfg.checkpoint_every > 0 && self.step.is_multiple_of(self.cfg.checkpoint_every) {
                    std::fs::create_dir_all(dir)?;
                    self.checkpoint()?
                        .save(&dir.join(format!("step{:06}.wake", self.step)))?;
                }
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let meta = Metadata {
            step: self.step,
            counts: [self.counts.single, self.counts.double],
            adam_steps: [self.opt_gen.step, self.opt_disc.step],
            rng_seed: hex(&self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: format!("{:x}", self.rng.get_word_pos()),
            train: self.cfg.clone(),
        };
        let metadata = toml::to_string(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut tensors: Vec<(String, Tensor<f32>)> =
            self.model.set.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        for (tag, opt) in [("gen", &self.opt_gen), ("disc", &self.opt_disc)] {
            let (m, v) = opt.moments();
            for (k, id) in opt.ids().iter().enumerate() {
                let name = self.model.set.name(*id);
                tensors.push((format!("adam.{tag}.m.{name}"), m[k].clone()));
                tensors.push((format!("adam.{tag}.v.{name}"), v[k].clone()));
            }
        }
        Ok(Checkpoint { metadata, tensors })
    }

    /// Restores the exact training state stored by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: Metadata = toml::from_str(&ck.metadata).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut t = Trainer::new(meta.train)?;
        t.model.set.load_from(&params_from(ck, &t.model.set)?)?;
        for (tag, opt) in [("gen", &mut t.opt_gen), ("disc", &mut t.opt_disc)] {
            let names: Vec<String> = opt.ids().iter().map(|id| t.model.set.name(*id).to_string()).collect();
            let (m, v) = opt.moments_mut();
            for (k, name) in names.iter().enumerate() {
                for (kind, dst) in [("m", &mut m[k]), ("v", &mut v[k])] {
                    let key = format!("adam.{tag}.{kind}.{name}");
                    let src = ck
                        .get(&key)
                        .ok_or_else(|| Error::Checkpoint(format!("missing {key}")))?;
                    if src.shape() != dst.shape() {
                        return Err(Error::Checkpoint(format!("{key}: shape {:?}", src.shape())));
                    }
                    *dst = src.clone();
                }
            }
        }
        t.opt_gen.step = meta.adam_steps[0];
        t.opt_disc.step = meta.adam_steps[1];
        let seed: [u8; 32] = unhex(&meta.rng_seed)?
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        t.rng = ChaCha8Rng::from_seed(seed);
        t.rng.set_stream(meta.rng_stream);
        t.rng.set_word_pos(
            u128::from_str_radix(&meta.rng_word_pos, 16)
                .map_err(|e| Error::Checkpoint(format!("rng position: {e}")))?,
        );
        t.step = meta.step;
        t.counts = StrategyCounts {
            single: meta.counts[0],
            double: meta.counts[1],
        };
        Ok(t)
    }
}

/// Trains from scratch and returns the final state; also written as
/// `final.wake` when a checkpoint directory is configured.
pub fn run_training(cfg: TrainConfig, corpus: &[AudioClip], on_log: impl FnMut(&StepLog)) -> Result<Checkpoint> {
    let mut t = Trainer::new(cfg)?;
    t.run(corpus, on_log)?;
    let ck = t.checkpoint()?;
    if let Some(dir) = &t.cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        ck.save(&dir.join("final.wake"))?;
    }
    Ok(ck)
}

/// Parameter tensors of `layout` looked up by name in a checkpoint.
pub fn params_from(ck: &Checkpoint, layout: &ParamSet) -> Result<ParamSet> {
    let mut out = ParamSet::new();
    for (name, t) in layout.iter() {
        let src = ck
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if src.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: expected shape {:?}, found {:?}",
                t.shape(),
                src.shape()
            )));
        }
        out.add(name, src.clone());
    }
    Ok(out)
}

/// Model described by a checkpoint written by [`Trainer::checkpoint`].
pub fn load_model(ck: &Checkpoint) -> Result<ModelParams> {
    let meta: Metadata = toml::from_str(&ck.metadata).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let layout = ModelParams::new(meta.train.model.clone())?;
    let set = params_from(ck, &layout.set)?;
    ModelParams::with_params(meta.train.model, &set)
}

/// Training step count stored in a checkpoint.
pub fn checkpoint_step(ck: &Checkpoint) -> Result<u64> {
    let meta: Metadata = toml::from_str(&ck.metadata).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    Ok(meta.step)
}
