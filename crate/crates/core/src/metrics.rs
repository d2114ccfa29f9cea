//! Signal-quality metrics used in reports.

use crate::autodiff::Graph;
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::losses::{MelBank, MelScaleConfig};
use crate::tensor::Tensor;

/// `10 log10(sum x^2 / sum (x - y)^2)` in dB; `+inf` when `y == x`.
pub fn snr(x: &AudioClip, y: &AudioClip) -> Result<f64> {
    snr_slices(x.samples(), y.samples())
}

pub fn snr_slices(x: &[f32], y: &[f32]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Length {
            what: "snr input",
            expected: x.len(),
            actual: y.len(),
        });
    }
    let signal: f64 = x.iter().map(|v| (*v as f64).powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::config("snr reference", "all-zero reference signal"));
    }
    let noise: f64 = x.iter().zip(y).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Mel-domain distance with uniform weighting, a stand-in for perceptual
/// quality scores. Not PESQ.
pub struct SpectralDistance {
    bank: MelBank<f64>,
}

impl SpectralDistance {
    pub fn new() -> Result<Self> {
        Ok(SpectralDistance {
            bank: MelBank::new(&MelScaleConfig::default())?,
        })
    }

    pub fn eval(&self, x: &AudioClip, y: &AudioClip) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Length {
                what: "spectral distance input",
                expected: x.len(),
                actual: y.len(),
            });
        }
        let g = Graph::<f64>::new();
        let to = |c: &AudioClip| {
            g.constant(Tensor::from_parts(
                vec![c.len()],
                c.samples().iter().map(|v| *v as f64).collect(),
            ))
        };
        let ones = Tensor::full(&[x.len()], 1.0);
        Ok(self.bank.distance(to(x), to(y), &ones)?.value().item())
    }
}

pub fn spectral_distance(x: &AudioClip, y: &AudioClip) -> Result<f64> {
    SpectralDistance::new()?.eval(x, y)
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}
