//! Waveform containers, WAV I/O and the STFT/ISTFT pair.

mod stft;
mod wav;

pub use stft::{StftConfig, StftPlan, Window};
pub use wav::{quantize_pcm16, read_wav, wav_encoding, write_wav, write_wav_as, WavEncoding};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_RATE: u32 = 16000;
/// One second at [`SAMPLE_RATE`].
pub const CLIP_LEN: usize = 16000;

/// Mono waveform with finite samples.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::config("samples", format!("non-finite sample at index {i}")));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    /// Clip at the pipeline rate.
    pub fn from_samples(samples: Vec<f32>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn silence(len: usize) -> Self {
        AudioClip {
            samples: vec![0.0; len],
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| (*v as f64) * (*v as f64)).sum()
    }
}

/// Complex STFT grid stored as a `(2, F, T)` tensor of real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    data: Tensor<f32>,
}

impl Spectrogram {
    pub fn new(data: Tensor<f32>) -> Result<Self> {
        if data.shape().len() != 3 || data.shape()[0] != 2 {
            return Err(Error::shape("spectrogram", data.shape(), &[2, 0, 0]));
        }
        Ok(Spectrogram { data })
    }

    pub fn zeros(bins: usize, frames: usize) -> Self {
        Spectrogram {
            data: Tensor::zeros(&[2, bins, frames]),
        }
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.data
    }

    /// Magnitude at bin `f`, frame `t`.
    pub fn magnitude(&self, f: usize, t: usize) -> f32 {
        let plane = self.bins() * self.frames();
        let i = f * self.frames() + t;
        let (re, im) = (self.data.data()[i], self.data.data()[plane + i]);
        (re * re + im * im).sqrt()
    }
}

/// Forward STFT of a clip.
pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrogram> {
    let plan = StftPlan::<f32>::new(*cfg)?;
    let data = plan.forward(clip.samples())?;
    let shape = plan.spec_shape(clip.len());
    Spectrogram::new(Tensor::from_parts(shape.to_vec(), data))
}

/// Inverse STFT back to `out_len` samples.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig, out_len: usize) -> Result<AudioClip> {
    let plan = StftPlan::<f32>::new(*cfg)?;
    let expected = plan.spec_shape(out_len);
    if spec.tensor().shape() != expected {
        return Err(Error::shape("istft", spec.tensor().shape(), &expected));
    }
    let samples = plan.inverse(spec.tensor().data(), out_len)?;
    AudioClip::new(samples, SAMPLE_RATE)
}
