//! Audio editing operations, used both as training augmentation and as
//! evaluation attacks.
//!
//! Every operation is affine in the signal: a linear map (gain, filter,
//! resampling, muting) plus, for the noise ops, an additive term whose scale
//! is fixed from the input power at realization time. The linear parts carry
//! exact adjoints so gradients flow through them during training.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{LinearOp, Var};
use crate::dsp::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const NYQUIST: f64 = SAMPLE_RATE as f64 / 2.0;

fn default_snr() -> f64 {
    35.0
}
fn default_lf() -> f64 {
    5000.0
}
fn default_hf() -> f64 {
    500.0
}
fn default_boost() -> f64 {
    6.0
}
fn default_duck() -> f64 {
    -6.0
}
fn default_fraction() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    8.6
}

/// One editing operation with its parameters. Serialized with an `op` tag
/// holding the two-letter name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", deny_unknown_fields)]
pub enum Attack {
    /// No edit.
    NA,
    /// Resample to 8 kHz and back with a Kaiser-windowed sinc.
    UD {
        #[serde(default = "default_beta")]
        kaiser_beta: f64,
    },
    /// White Gaussian noise at a target SNR.
    RN {
        #[serde(default = "default_snr")]
        snr_db: f64,
    },
    /// Voss-McCartney pink noise at a target SNR.
    PN {
        #[serde(default = "default_snr")]
        snr_db: f64,
    },
    /// 4th-order Butterworth low-pass.
    LF {
        #[serde(default = "default_lf")]
        cutoff_hz: f64,
    },
    /// 4th-order Butterworth high-pass.
    HF {
        #[serde(default = "default_hf")]
        cutoff_hz: f64,
    },
    /// 4th-order high-pass at `low_hz` cascaded with a 4th-order low-pass at `high_hz`.
    BF {
        #[serde(default = "default_hf")]
        low_hz: f64,
        #[serde(default = "default_lf")]
        high_hz: f64,
    },
    /// Gain boost.
    BA {
        #[serde(default = "default_boost")]
        gain_db: f64,
    },
    /// Gain reduction.
    DA {
        #[serde(default = "default_duck")]
        gain_db: f64,
    },
    /// Zero one random contiguous span covering `fraction` of the clip.
    SA {
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
}

pub const ALL_OPS: [&str; 10] = ["NA", "UD", "RN", "PN", "LF", "HF", "BF", "BA", "DA", "SA"];

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::NA => "NA",
            Attack::UD { .. } => "UD",
            Attack::RN { .. } => "RN",
            Attack::PN { .. } => "PN",
            Attack::LF { .. } => "LF",
            Attack::HF { .. } => "HF",
            Attack::BF { .. } => "BF",
            Attack::BA { .. } => "BA",
            Attack::DA { .. } => "DA",
            Attack::SA { .. } => "SA",
        }
    }

    /// The named operation with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_uppercase().as_str() {
            "NA" => Attack::NA,
            "UD" => Attack::UD {
                kaiser_beta: default_beta(),
            },
            "RN" => Attack::RN { snr_db: default_snr() },
            "PN" => Attack::PN { snr_db: default_snr() },
            "LF" => Attack::LF {
                cutoff_hz: default_lf(),
            },
            "HF" => Attack::HF {
                cutoff_hz: default_hf(),
            },
            "BF" => Attack::BF {
                low_hz: default_hf(),
                high_hz: default_lf(),
            },
            "BA" => Attack::BA {
                gain_db: default_boost(),
            },
            "DA" => Attack::DA {
                gain_db: default_duck(),
            },
            "SA" => Attack::SA {
                fraction: default_fraction(),
            },
            _ => {
                return Err(Error::config(
                    "op",
                    format!("unknown attack {name:?}; expected one of {ALL_OPS:?}"),
                ))
            }
        })
    }

    /// Every operation with default parameters.
    pub fn default_menu() -> Vec<Attack> {
        ALL_OPS
            .iter()
            .map(|n| Attack::from_name(n).expect("known name"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cutoff = |field: &'static str, f: f64| {
            if f > 0.0 && f < NYQUIST {
                Ok(())
            } else {
                Err(Error::config(field, format!("{f} Hz must lie in (0, {NYQUIST})")))
            }
        };
        match *self {
            Attack::NA => Ok(()),
            Attack::UD { kaiser_beta } => {
                if kaiser_beta.is_finite() && kaiser_beta >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("kaiser_beta", "must be finite and >= 0"))
                }
            }
            Attack::RN { snr_db } | Attack::PN { snr_db } => {
                if snr_db > 0.0 && snr_db.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("snr_db", format!("{snr_db} must be > 0")))
                }
            }
            Attack::LF { cutoff_hz } | Attack::HF { cutoff_hz } => cutoff("cutoff_hz", cutoff_hz),
            Attack::BF { low_hz, high_hz } => {
                cutoff("low_hz", low_hz)?;
                cutoff("high_hz", high_hz)?;
                if low_hz < high_hz {
                    Ok(())
                } else {
                    Err(Error::config("low_hz", "must be below high_hz"))
                }
            }
            Attack::BA { gain_db } | Attack::DA { gain_db } => {
                if gain_db.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("gain_db", "must be finite"))
                }
            }
            Attack::SA { fraction } => {
                if (0.0..=1.0).contains(&fraction) {
                    Ok(())
                } else {
                    Err(Error::config("fraction", format!("{fraction} outside [0, 1]")))
                }
            }
        }
    }
}

/// An operation plus the seed of its random parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub attack: Attack,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(attack: Attack, seed: u64) -> Self {
        AttackConfig { attack, seed }
    }
}

/// Uniform choice from the menu; the returned seed is drawn from `rng`.
pub fn random_attack(rng: &mut impl Rng, menu: &[Attack]) -> Result<AttackConfig> {
    if menu.is_empty() {
        return Err(Error::config("attack menu", "must not be empty"));
    }
    let attack = menu[rng.gen_range(0..menu.len())];
    Ok(AttackConfig::new(attack, rng.gen()))
}

/// Normalized biquad section `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn rbj(cutoff: f64, q: f64, highpass: bool) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff / SAMPLE_RATE as f64;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0]
        } else {
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0]
        };
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    /// Complex gain magnitude at frequency `f`.
    pub fn gain_at(&self, f: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / SAMPLE_RATE as f64;
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            self.a[0] * z1.1 + self.a[1] * z2.1,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Two-section 4th-order Butterworth, exact at the cutoff after prewarping.
pub fn butterworth4(cutoff: f64, highpass: bool) -> [Biquad; 2] {
    let q = |k: f64| 1.0 / (2.0 * (std::f64::consts::PI * (2.0 * k + 1.0) / 8.0).cos());
    [
        Biquad::rbj(cutoff, q(0.0), highpass),
        Biquad::rbj(cutoff, q(1.0), highpass),
    ]
}

fn iir_in_place(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = s.b[0] * *v + z1;
            z1 = s.b[1] * *v - s.a[0] * y + z2;
            z2 = s.b[2] * *v - s.a[1] * y;
            *v = y;
        }
    }
}

fn zeroth_bessel(x: f64) -> f64 {
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= (x / (2.0 * k)).powi(2);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Symmetric half-band low-pass for 2:1 resampling, taps `-16..=16`
/// (the outermost pair falls on a sinc zero). Each polyphase half sums to
/// 1/2 so that DC passes exactly through down- then up-sampling.
pub fn halfband_kernel(beta: f64) -> Vec<f64> {
    const HALF: i64 = 16;
    let mut h: Vec<f64> = (-HALF..=HALF)
        .map(|n| {
            let t = n as f64 / 2.0;
            let sinc = if n == 0 {
                1.0
            } else {
                (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
            };
            let r = n as f64 / HALF as f64;
            0.5 * sinc * zeroth_bessel(beta * (1.0 - r * r).max(0.0).sqrt()) / zeroth_bessel(beta)
        })
        .collect();
    for parity in 0..2 {
        let s: f64 = h
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == parity)
            .map(|(_, v)| v)
            .sum();
        h.iter_mut()
            .enumerate()
            .filter(|(i, _)| i % 2 == parity)
            .for_each(|(_, v)| *v *= 0.5 / s);
    }
    h
}

/// Linear part of a realized attack.
#[derive(Clone, Debug, PartialEq)]
enum LinearPart {
    Identity,
    Gain(f64),
    Iir(Vec<Biquad>),
    UpDown(Vec<f64>),
    Mute { start: usize, end: usize },
}

struct Op<T> {
    part: LinearPart,
    name: &'static str,
    _t: std::marker::PhantomData<T>,
}

fn to_f64<T: Scalar>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.as_f64()).collect()
}

fn from_f64<T: Scalar>(x: Vec<f64>) -> Vec<T> {
    x.into_iter().map(T::of).collect()
}

impl LinearPart {
    fn forward<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        match self {
            LinearPart::Identity => x.to_vec(),
            LinearPart::Gain(g) => {
                let g = T::of(*g);
                x.iter().map(|v| *v * g).collect()
            }
            LinearPart::Iir(s) => {
                let mut y = to_f64(x);
                iir_in_place(s, &mut y);
                from_f64(y)
            }
            LinearPart::UpDown(h) => from_f64(updown(h, &to_f64(x))),
            LinearPart::Mute { start, end } => {
                let mut y = x.to_vec();
                y[*start..*end].iter_mut().for_each(|v| *v = T::zero());
                y
            }
        }
    }

    fn adjoint<T: Scalar>(&self, g: &[T]) -> Vec<T> {
        match self {
            LinearPart::Iir(s) => {
                let mut y: Vec<f64> = g.iter().rev().map(|v| v.as_f64()).collect();
                iir_in_place(s, &mut y);
                y.reverse();
                from_f64(y)
            }
            LinearPart::UpDown(h) => from_f64(updown_adjoint(h, &to_f64(g))),
            // The remaining parts are diagonal.
            other => other.forward(g),
        }
    }
}

impl<T: Scalar> LinearOp<T> for Op<T> {
    fn name(&self) -> &'static str {
        self.name
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        self.part.forward(x)
    }
    fn adjoint(&self, g: &[T]) -> Vec<T> {
        self.part.adjoint(g)
    }
}

/// Low-rate indices `m` with `|t - 2m| <= half`.
fn phase_range(t: i64, half: i64, m_len: i64) -> std::ops::RangeInclusive<i64> {
    let lo = (t - half + 1).div_euclid(2).max(0);
    let hi = (t + half).div_euclid(2).min(m_len - 1);
    lo..=hi
}

fn updown(h: &[f64], x: &[f64]) -> Vec<f64> {
    let half = (h.len() / 2) as i64;
    let n = x.len() as i64;
    let m_len = (n + 1) / 2;
    let d: Vec<f64> = (0..m_len)
        .map(|m| {
            (-half..=half)
                .map(|k| {
                    let i = 2 * m - k;
                    if (0..n).contains(&i) {
                        h[(k + half) as usize] * x[i as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    (0..n)
        .map(|t| {
            phase_range(t, half, m_len)
                .map(|m| 2.0 * h[(t - 2 * m + half) as usize] * d[m as usize])
                .sum()
        })
        .collect()
}

fn updown_adjoint(h: &[f64], g: &[f64]) -> Vec<f64> {
    let half = (h.len() / 2) as i64;
    let n = g.len() as i64;
    let m_len = (n + 1) / 2;
    let d: Vec<f64> = (0..m_len)
        .map(|m| {
            (-half..=half)
                .map(|k| {
                    let t = 2 * m + k;
                    if (0..n).contains(&t) {
                        2.0 * h[(k + half) as usize] * g[t as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    (0..n)
        .map(|i| {
            phase_range(i, half, m_len)
                .map(|m| h[(2 * m - i + half) as usize] * d[m as usize])
                .sum()
        })
        .collect()
}

/// Voss-McCartney pink noise: 16 octave rows plus a white row, rows updated
/// at the trailing-zero count of the sample index.
pub fn pink_noise(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    const ROWS: usize = 16;
    let mut rows: Vec<f64> = (0..ROWS).map(|_| rng.sample(StandardNormal)).collect();
    let mut sum: f64 = rows.iter().sum();
    (0..len)
        .map(|n| {
            if n > 0 {
                let k = (n.trailing_zeros() as usize).min(ROWS - 1);
                let new: f64 = rng.sample(StandardNormal);
                sum += new - rows[k];
                rows[k] = new;
            }
            sum + rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

fn scale_to_snr(noise: &mut [f64], signal_power: f64, snr_db: f64) {
    let p: f64 = noise.iter().map(|v| v * v).sum::<f64>() / noise.len().max(1) as f64;
    let target = signal_power / 10f64.powf(snr_db / 10.0);
    let k = if p > 0.0 { (target / p).sqrt() } else { 0.0 };
    noise.iter_mut().for_each(|v| *v *= k);
}

/// An attack with all randomness resolved for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Realized {
    name: &'static str,
    part: LinearPart,
    noise: Option<Vec<f64>>,
}

impl Realized {
    /// Resolves random spans and noise for a signal of the given samples.
    /// Noise is scaled from the power of `signal`.
    pub fn new<T: Scalar>(cfg: &AttackConfig, signal: &[T]) -> Result<Self> {
        cfg.attack.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let len = signal.len();
        let power = signal.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / len.max(1) as f64;
        let (part, noise) = match cfg.attack {
            Attack::NA => (LinearPart::Identity, None),
            Attack::UD { kaiser_beta } => (LinearPart::UpDown(halfband_kernel(kaiser_beta)), None),
            Attack::RN { snr_db } => {
                let mut n: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
                scale_to_snr(&mut n, power, snr_db);
                (LinearPart::Identity, Some(n))
            }
            Attack::PN { snr_db } => {
                let mut n = pink_noise(&mut rng, len);
                let mean = n.iter().sum::<f64>() / len.max(1) as f64;
                n.iter_mut().for_each(|v| *v -= mean);
                scale_to_snr(&mut n, power, snr_db);
                (LinearPart::Identity, Some(n))
            }
            Attack::LF { cutoff_hz } => (LinearPart::Iir(butterworth4(cutoff_hz, false).to_vec()), None),
            Attack::HF { cutoff_hz } => (LinearPart::Iir(butterworth4(cutoff_hz, true).to_vec()), None),
            Attack::BF { low_hz, high_hz } => {
                let mut s = butterworth4(low_hz, true).to_vec();
                s.extend(butterworth4(high_hz, false));
                (LinearPart::Iir(s), None)
            }
            Attack::BA { gain_db } | Attack::DA { gain_db } => (LinearPart::Gain(10f64.powf(gain_db / 20.0)), None),
            Attack::SA { fraction } => {
                let span = (fraction * len as f64).floor() as usize;
                let start = rng.gen_range(0..=len - span);
                (
                    LinearPart::Mute {
                        start,
                        end: start + span,
                    },
                    None,
                )
            }
        };
        Ok(Realized {
            name: cfg.attack.name(),
            part,
            noise,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Zeroed span for muting attacks.
    pub fn muted_span(&self) -> Option<(usize, usize)> {
        match self.part {
            LinearPart::Mute { start, end } => Some((start, end)),
            _ => None,
        }
    }

    pub fn noise(&self) -> Option<&[f64]> {
        self.noise.as_deref()
    }

    pub fn apply<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        let mut y = self.part.forward(x);
        if let Some(n) = &self.noise {
            y.iter_mut().zip(n).for_each(|(v, n)| *v = *v + T::of(*n));
        }
        Ok(y)
    }

    /// Differentiable application; gradients pass through the linear part.
    pub fn apply_var<'g, T: Scalar>(&self, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.check_len(x.value().len())?;
        let y = if self.part == LinearPart::Identity {
            x
        } else {
            let op: Rc<dyn LinearOp<T>> = Rc::new(Op::<T> {
                part: self.part.clone(),
                name: self.name,
                _t: std::marker::PhantomData,
            });
            x.linear_op(op)?
        };
        match &self.noise {
            Some(n) => y.add(
                x.graph()
                    .constant(Tensor::from_parts(vec![n.len()], n.iter().map(|v| T::of(*v)).collect())),
            ),
            None => Ok(y),
        }
    }

    /// Adjoint of the linear part, for tests of the gradient path.
    pub fn adjoint<T: Scalar>(&self, g: &[T]) -> Vec<T> {
        self.part.adjoint(g)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if let Some(n) = &self.noise {
            if n.len() != len {
                return Err(Error::Length {
                    what: "attacked signal",
                    expected: n.len(),
                    actual: len,
                });
            }
        }
        if let Some((_, end)) = self.muted_span() {
            if end > len {
                return Err(Error::Length {
                    what: "attacked signal",
                    expected: end,
                    actual: len,
                });
            }
        }
        Ok(())
    }
}

pub fn apply_attack(clip: &AudioClip, cfg: &AttackConfig) -> Result<AudioClip> {
    if cfg.attack == Attack::NA {
        cfg.attack.validate()?;
        return Ok(clip.clone());
    }
    let r = Realized::new(cfg, clip.samples())?;
    AudioClip::new(r.apply(clip.samples())?, clip.sample_rate())
}
