use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Sample encoding used when writing WAV files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// Reads a mono 16 kHz WAV file (PCM16 or float32).
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Channels(spec.channels));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate(spec.sample_rate, SAMPLE_RATE));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::Wav(format!(
                "unsupported encoding {format:?} with {bits} bits per sample"
            )))
        }
    };
    AudioClip::new(samples, spec.sample_rate)
}

/// Sample encoding of an existing WAV file.
pub fn wav_encoding(path: impl AsRef<Path>) -> Result<WavEncoding> {
    let spec = WavReader::open(path.as_ref())?.spec();
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => Ok(WavEncoding::Pcm16),
        (SampleFormat::Float, 32) => Ok(WavEncoding::Float32),
        (format, bits) => Err(Error::Wav(format!(
            "unsupported encoding {format:?} with {bits} bits per sample"
        ))),
    }
}

/// Quantizes one amplitude to 16-bit PCM, rounding half away from zero.
///
/// Returns the code and whether the amplitude had to be clipped.
pub fn quantize_pcm16(x: f32) -> (i16, bool) {
    let scaled = (x as f64 * 32768.0).round();
    if scaled > i16::MAX as f64 {
        (i16::MAX, x > 1.0)
    } else if scaled < i16::MIN as f64 {
        (i16::MIN, true)
    } else {
        (scaled as i16, false)
    }
}

/// Writes a clip as 16-bit PCM. Amplitudes outside `[-1, 1]` are clipped;
/// the number of clipped samples is returned.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<usize> {
    write_wav_as(clip, path, WavEncoding::Pcm16)
}

pub fn write_wav_as(clip: &AudioClip, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<usize> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    let mut clipped = 0;
    match encoding {
        WavEncoding::Pcm16 => {
            for &x in clip.samples() {
                let (code, was_clipped) = quantize_pcm16(x);
                clipped += was_clipped as usize;
                writer.write_sample(code)?;
            }
        }
        WavEncoding::Float32 => {
            for &x in clip.samples() {
                writer.write_sample(x)?;
            }
        }
    }
    writer.finalize()?;
    if clipped > 0 {
        log::warn!("{} samples clipped while writing {}", clipped, path.as_ref().display());
    }
    Ok(clipped)
}
