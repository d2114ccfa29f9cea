//! Synthetic training audio and WAV-directory ingestion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, AudioClip, CLIP_LEN, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const MAX_PEAK: f32 = 0.8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// Harmonic multi-tone clips.
    pub tones: usize,
    /// Band-limited noise clips.
    pub noise: usize,
    /// Amplitude-modulated clips.
    pub am: usize,
    /// Optional directory of mono 16 kHz WAV files, cut into one-second clips.
    #[serde(default)]
    pub wav_dir: Option<PathBuf>,
}

impl CorpusSpec {
    /// Roughly equal thirds of each synthetic kind.
    pub fn mixed(n: usize) -> Self {
        CorpusSpec {
            tones: n - 2 * (n / 3),
            noise: n / 3,
            am: n / 3,
            wav_dir: None,
        }
    }

    pub fn synthetic_len(&self) -> usize {
        self.tones + self.noise + self.am
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn harmonic(rng: &mut impl Rng) -> Vec<f64> {
    let f0 = log_uniform(rng, 80.0, 1000.0);
    let partials = rng.gen_range(1..=8);
    let vib_rate = rng.gen_range(0.0..6.0);
    let vib_depth = rng.gen_range(0.0..0.01);
    let phases: Vec<f64> = (0..partials).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let decay = rng.gen_range(0.5..1.5);
    let sr = SAMPLE_RATE as f64;
    let mut phase = 0.0;
    (0..CLIP_LEN)
        .map(|n| {
            let t = n as f64 / sr;
            phase += 2.0 * PI * f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin()) / sr;
            (0..partials)
                .filter(|h| f0 * (*h as f64 + 1.0) < 7500.0)
                .map(|h| {
                    let k = h as f64 + 1.0;
                    (k * phase + phases[h]).sin() / k.powf(decay)
                })
                .sum()
        })
        .collect()
}

/// White noise through one resonant band-pass biquad.
fn filtered_noise(rng: &mut impl Rng) -> Vec<f64> {
    let fc = log_uniform(rng, 150.0, 6000.0);
    let q = rng.gen_range(0.5..5.0);
    let w0 = 2.0 * PI * fc / SAMPLE_RATE as f64;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    (0..CLIP_LEN)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, x, y1, y);
            y
        })
        .collect()
}

fn amplitude_modulated(rng: &mut impl Rng) -> Vec<f64> {
    let carrier = if rng.gen_bool(0.5) {
        harmonic(rng)
    } else {
        filtered_noise(rng)
    };
    let fm = rng.gen_range(1.0..20.0);
    let depth = rng.gen_range(0.3..1.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    carrier
        .iter()
        .enumerate()
        .map(|(n, c)| c * (1.0 + depth * (2.0 * PI * fm * n as f64 / SAMPLE_RATE as f64 + phase).sin()) / 2.0)
        .collect()
}

fn normalize(x: Vec<f64>, rng: &mut impl Rng) -> AudioClip {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = rng.gen_range(0.1..MAX_PEAK as f64);
    let k = if peak > 0.0 { target / peak } else { 0.0 };
    let samples = x.iter().map(|v| ((v * k) as f32).clamp(-MAX_PEAK, MAX_PEAK)).collect();
    AudioClip::from_samples(samples).expect("finite synthetic audio")
}

/// Generates the synthetic clips of `spec` in a fixed kind order, then
/// appends one-second cuts of every WAV in `spec.wav_dir`.
pub fn toy_corpus(spec: &CorpusSpec, rng: &mut impl Rng) -> Result<Vec<AudioClip>> {
    let mut out = Vec::with_capacity(spec.synthetic_len());
    for _ in 0..spec.tones {
        let x = harmonic(rng);
        out.push(normalize(x, rng));
    }
    for _ in 0..spec.noise {
        let x = filtered_noise(rng);
        out.push(normalize(x, rng));
    }
    for _ in 0..spec.am {
        let x = amplitude_modulated(rng);
        out.push(normalize(x, rng));
    }
    if let Some(dir) = &spec.wav_dir {
        out.extend(wav_dir_clips(dir)?);
    }
    Ok(out)
}

/// Non-overlapping one-second cuts of every `.wav` file in `dir`, sorted by
/// file name. Unreadable files are all reported together.
pub fn wav_dir_clips(dir: &Path) -> Result<Vec<AudioClip>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    let mut clips = vec![];
    let mut bad = vec![];
    for p in paths {
        match read_wav(&p) {
            Ok(c) => {
                for chunk in c.samples().chunks_exact(CLIP_LEN) {
                    clips.push(AudioClip::from_samples(chunk.to_vec())?);
                }
            }
            Err(e) => {
                log::error!("{}: {e}", p.display());
                bad.push(p);
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Corpus(bad));
    }
    Ok(clips)
}
