//! Training objectives: perceptual loss, accuracy loss with the wrong-key
//! hinge, and the spectrogram discriminator.

use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::codec::WatermarkBits;
use crate::dsp::{AudioClip, StftConfig, StftPlan, Window, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::inn::LEAKY_SLOPE;
use crate::optim::Adam;
use crate::params::{Bound, Conv2d, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Logit bound applied before the discriminator sigmoid.
pub const D_LOGIT_CLAMP: f64 = 15.0;

/// Magnitude floor inside the square root, keeping gradients finite at zero.
const MAG_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub w_p1: f64,
    pub w_p2: f64,
    pub w_p3: f64,
    pub w_t1: f64,
    pub w_t2: f64,
    pub w_l1: f64,
    pub w_l2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_p1: 1.0,
            w_p2: 1.0,
            w_p3: 5.0,
            w_t1: 10.0,
            w_t2: 10.0,
            w_l1: 1000.0,
            w_l2: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("w_p1", self.w_p1),
            ("w_p2", self.w_p2),
            ("w_p3", self.w_p3),
            ("w_t1", self.w_t1),
            ("w_t2", self.w_t2),
            ("w_l1", self.w_l1),
            ("w_l2", self.w_l2),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-sample emphasis applied to both signals before the mel transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct BroadWeight {
    weights: Vec<f32>,
}

impl BroadWeight {
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Constant weight of one, i.e. no emphasis.
    pub fn uniform(len: usize) -> Self {
        BroadWeight {
            weights: vec![1.0; len],
        }
    }
}

/// `hi` over the first and last `floor(frac * len)` samples, `lo` elsewhere.
pub fn broadweight_vector(len: usize, frac: f64, hi: f32, lo: f32) -> Result<BroadWeight> {
    if !(0.0..=0.5).contains(&frac) {
        return Err(Error::config("broadweight frac", format!("{frac} outside [0, 0.5]")));
    }
    if !(hi > 0.0 && lo > 0.0) {
        return Err(Error::config("broadweight", "weights must be strictly positive"));
    }
    let edge = (frac * len as f64).floor() as usize;
    let weights = (0..len)
        .map(|t| if t < edge || t >= len - edge { hi } else { lo })
        .collect();
    Ok(BroadWeight { weights })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MelScaleConfig {
    /// Exponents `i`; each scale uses window `2^i` and hop `2^i / 4`.
    pub scales: Vec<u32>,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub normalized: bool,
}

impl Default for MelScaleConfig {
    fn default() -> Self {
        MelScaleConfig {
            scales: (5..=11).collect(),
            n_mels: 64,
            f_min: 0.0,
            f_max: 8000.0,
            normalized: true,
        }
    }
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(f: f64) -> f64 {
    let (f_sp, min_log_hz, logstep) = (200.0 / 3.0, 1000.0, 6.4f64.ln() / 27.0);
    if f >= min_log_hz {
        min_log_hz / f_sp + (f / min_log_hz).ln() / logstep
    } else {
        f / f_sp
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    let (f_sp, min_log_hz, logstep) = (200.0 / 3.0, 1000.0, 6.4f64.ln() / 27.0);
    let min_log_mel = min_log_hz / f_sp;
    if m >= min_log_mel {
        min_log_hz * (logstep * (m - min_log_mel)).exp()
    } else {
        f_sp * m
    }
}

/// Triangular filters with area normalization, row-major `(n_mels, n_fft/2 + 1)`.
pub fn mel_filterbank(n_fft: usize, n_mels: usize, sample_rate: f64, f_min: f64, f_max: f64) -> Vec<f64> {
    let bins = n_fft / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
        let norm = 2.0 / (r - l);
        for k in 0..bins {
            let f = k as f64 * sample_rate / n_fft as f64;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            fb[m * bins + k] = w * norm;
        }
    }
    fb
}

struct MelScale<T: Scalar> {
    plan: Rc<StftPlan<T>>,
    filters: Tensor<T>,
}

/// STFT plans and filterbanks for every mel scale, built once.
pub struct MelBank<T: Scalar> {
    scales: Vec<MelScale<T>>,
}

impl<T: Scalar> MelBank<T> {
    pub fn new(cfg: &MelScaleConfig) -> Result<Self> {
        if cfg.scales.is_empty() || cfg.n_mels == 0 {
            return Err(Error::config("mel scales", "need at least one scale and one mel bin"));
        }
        let scales = cfg
            .scales
            .iter()
            .map(|&i| {
                if !(2..=16).contains(&i) {
                    return Err(Error::config("mel scales", format!("exponent {i} outside [2, 16]")));
                }
                let n = 1usize << i;
                let plan = StftPlan::new(StftConfig {
                    window_len: n,
                    hop: n / 4,
                    window: Window::Hann,
                    centered: true,
                    normalized: cfg.normalized,
                })?;
                let fb = mel_filterbank(n, cfg.n_mels, SAMPLE_RATE as f64, cfg.f_min, cfg.f_max);
                let filters = Tensor::from_parts(vec![cfg.n_mels, n / 2 + 1], fb.into_iter().map(T::of).collect());
                Ok(MelScale {
                    plan: Rc::new(plan),
                    filters,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MelBank { scales })
    }

    /// `log(1 + mel)` of a 1-D signal at every scale.
    pub fn log_mels<'g>(&self, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        let g = x.graph();
        self.scales
            .iter()
            .map(|s| {
                let mag = x.stft(&s.plan)?.complex_magnitude(T::of(MAG_EPS))?;
                Ok(g.constant(s.filters.clone()).matmul(mag)?.add_scalar(T::one()).log())
            })
            .collect()
    }

    /// Sum over scales of mean-L1 plus mean-squared differences of the
    /// log-mel spectrograms of `x * w` and `y * w`.
    pub fn distance<'g>(&self, x: Var<'g, T>, y: Var<'g, T>, w: &Tensor<T>) -> Result<Var<'g, T>> {
        if x.shape() != y.shape() || x.shape() != w.shape() {
            return Err(Error::shape("mel distance", &x.shape(), &y.shape()));
        }
        let a = self.log_mels(x.mul_const(w)?)?;
        let b = self.log_mels(y.mul_const(w)?)?;
        let mut total: Option<Var<'g, T>> = None;
        for (a, b) in a.into_iter().zip(b) {
            let d = a.sub(b)?;
            let term = d.abs().mean().add(d.square().mean())?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
        Ok(total.expect("at least one scale"))
    }
}

fn check_same_len(a: &AudioClip, b: &AudioClip) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Length {
            what: "signal pair",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn check_weight_len(w: &BroadWeight, len: usize) -> Result<()> {
    if w.len() != len {
        return Err(Error::Length {
            what: "broadweight",
            expected: len,
            actual: w.len(),
        });
    }
    Ok(())
}

/// Weighted multi-scale log-mel distance between two clips.
pub fn multiscale_mel_loss(x: &AudioClip, y: &AudioClip, w: &BroadWeight, cfg: &MelScaleConfig) -> Result<f64> {
    check_same_len(x, y)?;
    check_weight_len(w, x.len())?;
    let bank = MelBank::<f64>::new(cfg)?;
    let g = Graph::<f64>::new();
    let to = |c: &AudioClip| {
        g.constant(Tensor::from_parts(
            vec![c.len()],
            c.samples().iter().map(|v| *v as f64).collect(),
        ))
    };
    let wt = Tensor::from_parts(vec![w.len()], w.weights().iter().map(|v| *v as f64).collect());
    Ok(bank.distance(to(x), to(y), &wt)?.value().item())
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscriminatorConfig {
    pub widths: [usize; 3],
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { widths: [8, 16, 16] }
    }
}

/// Four stride-2 3x3 convs over the complex spectrogram, then a global mean.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    convs: [Conv2d; 4],
}

impl DiscriminatorParams {
    pub fn new(set: &mut ParamSet, cfg: &DiscriminatorConfig, rng: &mut impl Rng) -> Self {
        let [a, b, c] = cfg.widths;
        DiscriminatorParams {
            convs: [
                Conv2d::new(set, "disc.conv0", 2, a, 3, rng),
                Conv2d::new(set, "disc.conv1", a, b, 3, rng),
                Conv2d::new(set, "disc.conv2", b, c, 3, rng),
                Conv2d::new(set, "disc.conv3", c, 1, 3, rng),
            ],
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.convs.iter().flat_map(|c| c.ids()).collect()
    }

    /// Clamped logit of `D(spec)` for a `(2, F, T)` spectrogram.
    pub fn logit<'g, T: Scalar>(&self, p: &Bound<'g, T>, spec: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = spec;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(p, h)?.downsample2()?;
            if i < 3 {
                h = h.leaky_relu(T::of(LEAKY_SLOPE));
            }
        }
        let c = T::of(D_LOGIT_CLAMP);
        Ok(h.mean().clamp(-c, c))
    }
}

/// Shared per-type resources of the loss graphs.
pub struct LossContext<T: Scalar> {
    pub spec_plan: Rc<StftPlan<T>>,
    pub mel: MelBank<T>,
    pub broad: Tensor<T>,
}

impl<T: Scalar> LossContext<T> {
    pub fn new(spec_cfg: StftConfig, mel: &MelScaleConfig, broad: &BroadWeight) -> Result<Self> {
        Ok(LossContext {
            spec_plan: Rc::new(StftPlan::new(spec_cfg)?),
            mel: MelBank::new(mel)?,
            broad: Tensor::from_parts(
                vec![broad.len()],
                broad.weights().iter().map(|v| T::of(*v as f64)).collect(),
            ),
        })
    }

    /// Discriminator logit of a time-domain signal.
    pub fn disc_logit<'g>(&self, d: &DiscriminatorParams, p: &Bound<'g, T>, audio: Var<'g, T>) -> Result<Var<'g, T>> {
        d.logit(p, audio.stft(&self.spec_plan)?)
    }
}

/// Individual terms of the perceptual loss, for logging and recomposition.
pub struct PerceptualTerms<'g, T: Scalar> {
    pub l2: Var<'g, T>,
    pub adversarial: Var<'g, T>,
    pub mel: Var<'g, T>,
    pub total: Var<'g, T>,
}

/// Generator-side adversarial term. As printed: `log(1 - D(x_wm))`; the
/// alternative is the non-saturating `-log D(x_wm)`.
fn adversarial_term<'g, T: Scalar>(logit: Var<'g, T>, non_saturating: bool) -> Var<'g, T> {
    if non_saturating {
        logit.neg().softplus()
    } else {
        logit.softplus().neg()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn perceptual_graph<'g, T: Scalar>(
    ctx: &LossContext<T>,
    d: &DiscriminatorParams,
    p: &Bound<'g, T>,
    x: Var<'g, T>,
    x_wm: Var<'g, T>,
    w: &LossWeights,
    non_saturating: bool,
) -> Result<PerceptualTerms<'g, T>> {
    let l2 = x.sub(x_wm)?.square().mean();
    let adversarial = adversarial_term(ctx.disc_logit(d, p, x_wm)?, non_saturating);
    let mel = ctx.mel.distance(x, x_wm, &ctx.broad)?;
    let total = l2
        .scale(T::of(w.w_p1))
        .add(adversarial.scale(T::of(w.w_p2)))?
        .add(mel.scale(T::of(w.w_p3)))?;
    Ok(PerceptualTerms {
        l2,
        adversarial,
        mel,
        total,
    })
}

/// Perceptual loss of a watermarked clip.
pub fn perceptual_loss(
    x: &AudioClip,
    x_wm: &AudioClip,
    d: &DiscriminatorParams,
    set: &ParamSet,
    broad: &BroadWeight,
    w: &LossWeights,
) -> Result<f64> {
    check_same_len(x, x_wm)?;
    check_weight_len(broad, x.len())?;
    let ctx = LossContext::<f64>::new(StftConfig::pipeline(), &MelScaleConfig::default(), broad)?;
    let g = Graph::<f64>::new();
    let p = set.bind(&g, false);
    let to = |c: &AudioClip| {
        g.constant(Tensor::from_parts(
            vec![c.len()],
            c.samples().iter().map(|v| *v as f64).collect(),
        ))
    };
    Ok(perceptual_graph(&ctx, d, &p, to(x), to(x_wm), w, false)?
        .total
        .value()
        .item())
}

pub struct AccuracyTerms<'g, T: Scalar> {
    pub bce: Var<'g, T>,
    pub bce_wrong: Var<'g, T>,
    pub hinge: Var<'g, T>,
    pub total: Var<'g, T>,
}

/// `BCE(wm, re) + w_l1 * max(0, w_l2 - BCE(wm, wrong))` from logits.
pub fn accuracy_graph<'g, T: Scalar>(
    wm: &WatermarkBits,
    logits_re: Var<'g, T>,
    logits_wrong: Var<'g, T>,
    w: &LossWeights,
) -> Result<AccuracyTerms<'g, T>> {
    let y = wm.targets::<T>();
    let bce = logits_re.bce_with_logits(&y)?;
    let bce_wrong = logits_wrong.bce_with_logits(&y)?;
    let hinge = bce_wrong.neg().add_scalar(T::of(w.w_l2)).relu();
    let total = bce.add(hinge.scale(T::of(w.w_l1)))?;
    Ok(AccuracyTerms {
        bce,
        bce_wrong,
        hinge,
        total,
    })
}

pub fn accuracy_loss<T: Scalar>(wm: &WatermarkBits, logits_re: &[T], logits_wrong: &[T], w: &LossWeights) -> Result<T> {
    let g = Graph::<T>::new();
    let v = |l: &[T]| g.constant(Tensor::from_parts(vec![l.len()], l.to_vec()));
    Ok(accuracy_graph(wm, v(logits_re), v(logits_wrong), w)?
        .total
        .value()
        .item())
}

/// `-log D(real) - log(1 - D(fake))` from clamped logits.
pub fn discriminator_graph<'g, T: Scalar>(
    ctx: &LossContext<T>,
    d: &DiscriminatorParams,
    p: &Bound<'g, T>,
    real: Var<'g, T>,
    fake: Var<'g, T>,
) -> Result<Var<'g, T>> {
    let zr = ctx.disc_logit(d, p, real)?;
    let zf = ctx.disc_logit(d, p, fake)?;
    zr.neg().softplus().add(zf.softplus())
}

fn clip_var<'g>(g: &'g Graph<f32>, c: &AudioClip) -> Var<'g, f32> {
    g.constant(Tensor::from_parts(vec![c.len()], c.samples().to_vec()))
}

/// Discriminator output `D(x)` in `(0, 1)`.
pub fn discriminator_prob(
    ctx: &LossContext<f32>,
    d: &DiscriminatorParams,
    set: &ParamSet,
    x: &AudioClip,
) -> Result<f32> {
    let g = Graph::<f32>::new();
    let p = set.bind(&g, false);
    Ok(ctx.disc_logit(d, &p, clip_var(&g, x))?.sigmoid().value().item())
}

/// One optimizer step on the discriminator only; returns the loss before the step.
pub fn discriminator_update(
    ctx: &LossContext<f32>,
    d: &DiscriminatorParams,
    set: &mut ParamSet,
    opt: &mut Adam,
    real: &AudioClip,
    fake: &AudioClip,
) -> Result<f32> {
    check_same_len(real, fake)?;
    let g = Graph::<f32>::new();
    let p = set.bind(&g, true);
    let loss = discriminator_graph(ctx, d, &p, clip_var(&g, real), clip_var(&g, fake))?;
    let value = loss.value().item();
    let mut grads = g.backward(loss)?;
    let all = p.gradients(&mut grads);
    opt.apply(set, &opt.select(&all))?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{directional_check, grad_check_coords};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, len: usize, amp: f32) -> Vec<f32> {
        (0..len).map(|_| rng.gen_range(-amp..amp)).collect()
    }

    fn clip(v: Vec<f32>) -> AudioClip {
        AudioClip::from_samples(v).unwrap()
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!(
            [w.w_p1, w.w_p2, w.w_p3, w.w_t1, w.w_t2, w.w_l1, w.w_l2],
            [1.0, 1.0, 5.0, 10.0, 10.0, 1000.0, 0.01]
        );
        assert!(w.validate().is_ok());
        assert!(LossWeights { w_l1: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn broadweight_widths() {
        let w = broadweight_vector(16000, 0.03, 10.0, 1.0).unwrap();
        let v = w.weights();
        assert!(v[..480].iter().all(|x| *x == 10.0));
        assert!(v[480..15520].iter().all(|x| *x == 1.0));
        assert!(v[15520..].iter().all(|x| *x == 10.0));
        assert_eq!(v.len(), 16000);
        assert!(broadweight_vector(100, 0.0, 10.0, 1.0)
            .unwrap()
            .weights()
            .iter()
            .all(|x| *x == 1.0));
        assert!(broadweight_vector(100, 0.5, 10.0, 1.0)
            .unwrap()
            .weights()
            .iter()
            .all(|x| *x == 10.0));
        assert!(broadweight_vector(100, 0.6, 10.0, 1.0).is_err());
        assert!(broadweight_vector(100, -0.1, 10.0, 1.0).is_err());
    }

    #[test]
    fn slaney_scale_fixed_points() {
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
        assert!((hz_to_mel(600.0) - 9.0).abs() < 1e-12);
        // 6400 Hz = 1000 * 6.4 is exactly 27 steps above the break.
        assert!((hz_to_mel(6400.0) - 42.0).abs() < 1e-12);
        for f in [0.0, 10.0, 999.0, 1000.0, 4321.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn filterbank_triangles_have_unit_area() {
        // At n_fft = 1 << 14 the bin spacing is ~1 Hz, so the Riemann sum of
        // each area-normalized triangle is close to its integral, 1.
        let n = 1 << 14;
        let fb = mel_filterbank(n, 64, 16000.0, 0.0, 8000.0);
        let bins = n / 2 + 1;
        let df = 16000.0 / n as f64;
        for m in 0..64 {
            let area: f64 = fb[m * bins..(m + 1) * bins].iter().sum::<f64>() * df;
            assert!((area - 1.0).abs() < 0.03, "filter {m}: {area}");
        }
        assert!(fb.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn mel_loss_identity_symmetry_and_length_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let len = 4000;
        let x = clip(noise(&mut rng, len, 0.3));
        let y = clip(noise(&mut rng, len, 0.3));
        let w = broadweight_vector(len, 0.03, 10.0, 1.0).unwrap();
        let cfg = MelScaleConfig::default();
        assert_eq!(multiscale_mel_loss(&x, &x, &w, &cfg).unwrap(), 0.0);
        let a = multiscale_mel_loss(&x, &y, &w, &cfg).unwrap();
        let b = multiscale_mel_loss(&y, &x, &w, &cfg).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
        let short = clip(noise(&mut rng, len - 1, 0.3));
        assert!(multiscale_mel_loss(&x, &short, &w, &cfg).is_err());
        assert!(multiscale_mel_loss(&x, &x, &BroadWeight::uniform(len - 1), &cfg).is_err());
    }

    #[test]
    fn boundary_perturbation_costs_more_than_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let len = 16000;
        let x = noise(&mut rng, len, 0.2);
        let w = broadweight_vector(len, 0.03, 10.0, 1.0).unwrap();
        let cfg = MelScaleConfig::default();
        let delta = noise(&mut rng, 480, 0.01);
        let mut edge = x.clone();
        let mut mid = x.clone();
        for (i, d) in delta.iter().enumerate() {
            edge[i] += d;
            mid[7760 + i] += d;
        }
        let le = multiscale_mel_loss(&clip(x.clone()), &clip(edge), &w, &cfg).unwrap();
        let lm = multiscale_mel_loss(&clip(x), &clip(mid), &w, &cfg).unwrap();
        assert!(le > lm, "edge {le} mid {lm}");
    }

    fn disc(seed: u64) -> (ParamSet, DiscriminatorParams) {
        let mut set = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = DiscriminatorParams::new(&mut set, &DiscriminatorConfig { widths: [3, 4, 4] }, &mut rng);
        (set, d)
    }

    #[test]
    fn identical_inputs_leave_only_the_adversarial_term() {
        let (set, d) = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let len = 4000;
        let x = clip(noise(&mut rng, len, 0.3));
        let broad = broadweight_vector(len, 0.03, 10.0, 1.0).unwrap();
        let w = LossWeights::default();
        let total = perceptual_loss(&x, &x, &d, &set, &broad, &w).unwrap();
        let ctx = LossContext::<f32>::new(StftConfig::pipeline(), &MelScaleConfig::default(), &broad).unwrap();
        let dx = discriminator_prob(&ctx, &d, &set, &x).unwrap() as f64;
        assert!((total - w.w_p2 * (1.0 - dx).ln()).abs() < 1e-6, "{total}");
        let y = clip(noise(&mut rng, len, 0.3));
        let mel_only = LossWeights {
            w_p1: 0.0,
            w_p2: 0.0,
            w_p3: 1.0,
            ..w
        };
        let a = perceptual_loss(&x, &y, &d, &set, &broad, &mel_only).unwrap();
        let b = multiscale_mel_loss(&x, &y, &broad, &MelScaleConfig::default()).unwrap();
        assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        assert!(perceptual_loss(&x, &clip(vec![0.0; len - 2]), &d, &set, &broad, &w).is_err());
    }

    #[test]
    fn perceptual_gradient_matches_finite_differences() {
        let (set, d) = disc(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let len = 2400;
        let broad = broadweight_vector(len, 0.03, 10.0, 1.0).unwrap();
        let ctx = LossContext::<f64>::new(StftConfig::pipeline(), &MelScaleConfig::default(), &broad).unwrap();
        let x = Tensor::from_parts(vec![len], noise(&mut rng, len, 0.3).iter().map(|v| *v as f64).collect());
        let x_wm = Tensor::from_parts(
            vec![len],
            x.data().iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect(),
        );
        let w = LossWeights::default();
        for trial in 0..10 {
            let dir = Tensor::from_fn(&[len], |_| rng.gen_range(-1.0..1.0));
            let non_sat = trial % 2 == 1;
            let err = directional_check(
                |g, v| {
                    let p = set.bind(g, false);
                    Ok(perceptual_graph(&ctx, &d, &p, g.constant(x.clone()), v, &w, non_sat)?.total)
                },
                &x_wm,
                &dir,
                1e-7,
            )
            .unwrap();
            assert!(err < 1e-3, "trial {trial}: {err}");
        }
    }

    fn bce_scalar(y: &[u8], z: &[f64]) -> f64 {
        y.iter()
            .zip(z)
            .map(|(y, z)| {
                let p = 1.0 / (1.0 + (-z).exp());
                if *y == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / y.len() as f64
    }

    #[test]
    fn accuracy_loss_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = LossWeights::default();
        for _ in 0..50 {
            let wm = WatermarkBits::random(&mut rng, 32);
            let re: Vec<f64> = (0..32).map(|_| rng.gen_range(-6.0..6.0)).collect();
            // Push some wrong-key decodes towards confident agreement so the hinge fires.
            let conf = rng.gen_range(0.0..12.0);
            let wrong: Vec<f64> = wm
                .bits()
                .iter()
                .map(|b| if *b == 1 { conf } else { -conf } + rng.gen_range(-1.0..1.0))
                .collect();
            let oracle = bce_scalar(wm.bits(), &re) + w.w_l1 * (w.w_l2 - bce_scalar(wm.bits(), &wrong)).max(0.0);
            let got = accuracy_loss(&wm, &re, &wrong, &w).unwrap();
            assert!((got - oracle).abs() < 1e-6, "{got} {oracle}");
            let got32 = accuracy_loss(
                &wm,
                &re.iter().map(|v| *v as f32).collect::<Vec<_>>(),
                &wrong.iter().map(|v| *v as f32).collect::<Vec<_>>(),
                &w,
            )
            .unwrap() as f64;
            assert!((got32 - oracle).abs() < 1e-3 * oracle.max(1.0));
        }
    }

    #[test]
    fn accuracy_loss_examples() {
        let wm = WatermarkBits::from_hex("a5c3f00f", 32).unwrap();
        let w = LossWeights::default();
        let perfect: Vec<f64> = wm.signed::<f64>().iter().map(|s| 40.0 * s).collect();
        let coin = vec![0.0f64; wm.len()];
        // Wrong-key BCE of ln 2 >= 0.01 keeps the hinge off.
        assert!(accuracy_loss(&wm, &perfect, &coin, &w).unwrap() < 1e-12);
        let full = accuracy_loss(&wm, &coin, &perfect, &w).unwrap();
        assert!((full - (2f64.ln() + 10.0)).abs() < 1e-9, "{full}");
        assert!(accuracy_loss(&wm, &perfect[..8], &coin, &w).is_err());
    }

    /// Constant logit magnitude `z` with `bce = softplus(-z)` hits a target BCE.
    fn logits_with_bce(wm: &WatermarkBits, target: f64) -> Vec<f64> {
        let z = -((target).exp_m1()).ln();
        wm.signed::<f64>().iter().map(|s| s * z).collect()
    }

    #[test]
    fn hinge_switches_exactly_at_the_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let wm = WatermarkBits::random(&mut rng, 32);
        let w = LossWeights::default();
        let perfect: Vec<f64> = wm.signed::<f64>().iter().map(|s| 50.0 * s).collect();
        let g = Graph::<f64>::new();
        for (offset, active) in [(1e-6, false), (-1e-6, true)] {
            let wrong = logits_with_bce(&wm, w.w_l2 + offset);
            assert!((bce_scalar(wm.bits(), &wrong) - (w.w_l2 + offset)).abs() < 1e-12);
            let zw = g.param(Tensor::from_parts(vec![32], wrong));
            let terms = accuracy_graph(&wm, g.constant(Tensor::from_parts(vec![32], perfect.clone())), zw, &w).unwrap();
            let hinge = terms.hinge.value().item();
            let grads = g.backward(terms.total).unwrap();
            let gnorm = grads.get(zw).map(|t| t.sum_sq()).unwrap_or(0.0);
            if active {
                assert!((hinge - 1e-6).abs() < 1e-12, "{hinge}");
                assert!(gnorm > 0.0);
            } else {
                assert_eq!(hinge, 0.0);
                assert_eq!(gnorm, 0.0);
            }
        }
    }

    #[test]
    fn discriminator_at_one_half_and_gradients() {
        let (mut set, d) = disc(9);
        set.get_mut(d.convs[3].weight)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        set.get_mut(d.convs[3].bias)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let len = 4000;
        let broad = BroadWeight::uniform(len);
        let ctx = LossContext::<f64>::new(StftConfig::pipeline(), &MelScaleConfig::default(), &broad).unwrap();
        let real = Tensor::from_parts(vec![len], noise(&mut rng, len, 0.3).iter().map(|v| *v as f64).collect());
        let fake = Tensor::from_parts(vec![len], noise(&mut rng, len, 0.3).iter().map(|v| *v as f64).collect());
        let g = Graph::<f64>::new();
        let p = set.bind(&g, false);
        let l = discriminator_graph(&ctx, &d, &p, g.constant(real.clone()), g.constant(fake.clone())).unwrap();
        assert!((l.value().item() - 2.0 * 2f64.ln()).abs() < 1e-12);

        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        for t in set.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng2.gen_range(-0.2..0.2));
        }
        for (k, id) in d.ids().into_iter().enumerate() {
            let point = set.get(id).cast::<f64>();
            let coords: Vec<usize> = (0..point.len()).step_by(point.len().div_ceil(4)).collect();
            let err = grad_check_coords(
                |g, v| {
                    let mut p = set.bind(g, false);
                    p.substitute(id, v);
                    discriminator_graph(&ctx, &d, &p, g.constant(real.clone()), g.constant(fake.clone()))
                },
                &point,
                1e-6,
                &coords,
            )
            .unwrap();
            assert!(err < 1e-3, "param {k}: {err}");
        }
    }

    #[test]
    fn discriminator_learns_to_separate_a_fixed_pair() {
        let (mut set, d) = disc(12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let len = 4000;
        let real = clip(noise(&mut rng, len, 0.3));
        let fake = clip(real.samples().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect());
        let ctx = LossContext::<f32>::new(
            StftConfig::pipeline(),
            &MelScaleConfig::default(),
            &BroadWeight::uniform(len),
        )
        .unwrap();
        let mut opt = Adam::new(&set, d.ids(), 1e-3);
        let first = discriminator_update(&ctx, &d, &mut set, &mut opt, &real, &fake).unwrap();
        let mut last = first;
        for _ in 1..200 {
            last = discriminator_update(&ctx, &d, &mut set, &mut opt, &real, &fake).unwrap();
        }
        let pr = discriminator_prob(&ctx, &d, &set, &real).unwrap();
        let pf = discriminator_prob(&ctx, &d, &set, &fake).unwrap();
        assert!(pr > pf, "{pr} {pf}");
        assert!(last < first);
        assert!(pr < 1.0 && pf > 0.0);
    }
}
