//! Short-time Fourier transform pair with exact adjoints.
//!
//! Spectrograms are stored as `(2, F, T)` row-major buffers: channel 0 holds
//! real parts, channel 1 imaginary parts, `F = window_len / 2 + 1` one-sided
//! bins and `T` frames. The inverse uses overlap-add divided by the summed
//! squared window, so reconstruction holds for any hop that covers every
//! sample.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
    Rectangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: Window,
    /// Reflect-pad `window_len / 2` samples on each side before framing.
    pub centered: bool,
    /// Divide spectra by the window's L2 norm.
    pub normalized: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 1000,
            hop: 400,
            window: Window::Hann,
            centered: true,
            normalized: false,
        }
    }
}

impl StftConfig {
    /// Analysis used for the watermark domain: 1000-sample Hann, hop 400, normalized.
    pub fn pipeline() -> Self {
        StftConfig {
            normalized: true,
            ..StftConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || !self.window_len.is_multiple_of(2) {
            return Err(Error::config("window_len", "must be an even number >= 2"));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::config("hop", "must satisfy 0 < hop <= window_len"));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    fn pad(&self) -> usize {
        if self.centered {
            self.window_len / 2
        } else {
            0
        }
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        if self.centered {
            1 + len / self.hop
        } else if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop
        }
    }

    pub fn window_values<T: Scalar>(&self) -> Vec<T> {
        let n = self.window_len;
        match self.window {
            Window::Hann => (0..n)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    T::of(0.5 - 0.5 * phase.cos())
                })
                .collect(),
            Window::Rectangular => vec![T::one(); n],
        }
    }
}

/// Precomputed window and FFT plans for one configuration.
pub struct StftPlan<T: Scalar> {
    cfg: StftConfig,
    window: Vec<T>,
    scale: T,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for StftPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("cfg", &self.cfg).finish()
    }
}

impl<T: Scalar> StftPlan<T> {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let window = cfg.window_values::<T>();
        let scale = if cfg.normalized {
            let energy: f64 = window.iter().map(|w| w.as_f64() * w.as_f64()).sum();
            T::of(1.0 / energy.sqrt())
        } else {
            T::one()
        };
        let mut planner = FftPlanner::new();
        Ok(StftPlan {
            fwd: planner.plan_fft_forward(cfg.window_len),
            inv: planner.plan_fft_inverse(cfg.window_len),
            cfg,
            window,
            scale,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Output shape `(2, F, T)` for a signal of `len` samples.
    pub fn spec_shape(&self, len: usize) -> [usize; 3] {
        [2, self.cfg.bins(), self.cfg.frames(len)]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::Length {
                what: "stft input",
                expected: 1,
                actual: 0,
            });
        }
        if self.cfg.centered && len <= self.cfg.pad() {
            return Err(Error::config(
                "window_len",
                format!("reflect padding of {} needs more than {len} samples", self.cfg.pad()),
            ));
        }
        if !self.cfg.centered && len < self.cfg.window_len {
            return Err(Error::Length {
                what: "stft input",
                expected: self.cfg.window_len,
                actual: len,
            });
        }
        Ok(())
    }

    fn padded(&self, x: &[T]) -> Vec<T> {
        let p = self.cfg.pad();
        let n = x.len();
        let mut out = Vec::with_capacity(n + 2 * p);
        out.extend((0..p).map(|i| x[p - i]));
        out.extend_from_slice(x);
        out.extend((0..p).map(|i| x[n - 2 - i]));
        out
    }

    /// Folds a gradient on the padded signal back onto the original samples.
    fn unpad_adjoint(&self, gp: &[T], n: usize) -> Vec<T> {
        let p = self.cfg.pad();
        let mut g = gp[p..p + n].to_vec();
        for i in 0..p {
            g[p - i] = g[p - i] + gp[i];
            g[n - 2 - i] = g[n - 2 - i] + gp[p + n + i];
        }
        g
    }

    /// Forward transform of a real signal into a `(2, F, T)` buffer.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        let nw = self.cfg.window_len;
        let bins = self.cfg.bins();
        let frames = self.cfg.frames(x.len());
        let xp = self.padded(x);
        let plane = bins * frames;
        let mut out = vec![T::zero(); 2 * plane];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); nw];
        for t in 0..frames {
            let start = t * self.cfg.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(self.window[n] * xp[start + n], T::zero());
            }
            self.fwd.process(&mut buf);
            for f in 0..bins {
                out[f * frames + t] = buf[f].re * self.scale;
                out[plane + f * frames + t] = buf[f].im * self.scale;
            }
        }
        Ok(out)
    }

    /// Adjoint of [`forward`](Self::forward): maps a spectrogram-shaped
    /// gradient back onto a signal of `len` samples.
    pub fn forward_adjoint(&self, g: &[T], len: usize) -> Vec<T> {
        let nw = self.cfg.window_len;
        let bins = self.cfg.bins();
        let frames = self.cfg.frames(len);
        let plane = bins * frames;
        let mut gp = vec![T::zero(); len + 2 * self.cfg.pad()];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); nw];
        for t in 0..frames {
            for b in buf.iter_mut() {
                *b = Complex::new(T::zero(), T::zero());
            }
            for f in 0..bins {
                buf[f] = Complex::new(g[f * frames + t], g[plane + f * frames + t]);
            }
            self.inv.process(&mut buf);
            let start = t * self.cfg.hop;
            for n in 0..nw {
                gp[start + n] = gp[start + n] + self.scale * self.window[n] * buf[n].re;
            }
        }
        self.unpad_adjoint(&gp, len)
    }

    /// Squared-window overlap envelope over the padded signal.
    fn window_sum(&self, frames: usize, padded_len: usize) -> Vec<T> {
        let mut ws = vec![T::zero(); padded_len];
        for t in 0..frames {
            let start = t * self.cfg.hop;
            for (n, w) in self.window.iter().enumerate() {
                if start + n < padded_len {
                    ws[start + n] = ws[start + n] + *w * *w;
                }
            }
        }
        ws
    }

    fn check_spec(&self, spec_len: usize, out_len: usize) -> Result<usize> {
        self.check_len(out_len)?;
        let frames = self.cfg.frames(out_len);
        let expected = 2 * self.cfg.bins() * frames;
        if spec_len != expected {
            return Err(Error::Length {
                what: "istft spectrogram",
                expected,
                actual: spec_len,
            });
        }
        Ok(frames)
    }

    fn covered_envelope(&self, frames: usize, out_len: usize) -> Result<Vec<T>> {
        let p = self.cfg.pad();
        let ws = self.window_sum(frames, out_len + 2 * p);
        let env = ws[p..p + out_len].to_vec();
        if let Some(i) = env.iter().position(|w| w.as_f64() < 1e-8) {
            return Err(Error::config(
                "stft",
                format!("window sum vanishes at sample {i}; reconstruction undefined"),
            ));
        }
        Ok(env)
    }

    /// Inverse transform: windowed overlap-add divided by the squared-window sum.
    pub fn inverse(&self, spec: &[T], out_len: usize) -> Result<Vec<T>> {
        let frames = self.check_spec(spec.len(), out_len)?;
        let env = self.covered_envelope(frames, out_len)?;
        let nw = self.cfg.window_len;
        let bins = self.cfg.bins();
        let plane = bins * frames;
        let p = self.cfg.pad();
        let inv_scale = T::one() / self.scale;
        let norm = T::one() / T::of(nw as f64);
        let mut ola = vec![T::zero(); out_len + 2 * p + nw];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); nw];
        for t in 0..frames {
            for f in 0..bins {
                let re = spec[f * frames + t];
                let im = if f == 0 || f == bins - 1 {
                    T::zero()
                } else {
                    spec[plane + f * frames + t]
                };
                buf[f] = Complex::new(re, im);
                if f != 0 && f != bins - 1 {
                    buf[nw - f] = Complex::new(re, -im);
                }
            }
            self.inv.process(&mut buf);
            let start = t * self.cfg.hop;
            for n in 0..nw {
                ola[start + n] = ola[start + n] + self.window[n] * buf[n].re * norm * inv_scale;
            }
        }
        Ok(ola[p..p + out_len].iter().zip(&env).map(|(v, w)| *v / *w).collect())
    }

    /// Adjoint of [`inverse`](Self::inverse): maps a signal gradient onto a
    /// spectrogram-shaped gradient.
    pub fn inverse_adjoint(&self, g: &[T], out_len: usize) -> Result<Vec<T>> {
        let frames = self.cfg.frames(out_len);
        let env = self.covered_envelope(frames, out_len)?;
        let nw = self.cfg.window_len;
        let bins = self.cfg.bins();
        let plane = bins * frames;
        let p = self.cfg.pad();
        let mut h = vec![T::zero(); out_len + 2 * p + nw];
        for j in 0..out_len {
            h[p + j] = g[j] / env[j];
        }
        let coef = T::one() / (T::of(nw as f64) * self.scale);
        let two = T::of(2.0);
        let mut out = vec![T::zero(); 2 * plane];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); nw];
        for t in 0..frames {
            let start = t * self.cfg.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(self.window[n] * h[start + n], T::zero());
            }
            self.fwd.process(&mut buf);
            for f in 0..bins {
                let edge = f == 0 || f == bins - 1;
                let c = if edge { coef } else { two * coef };
                out[f * frames + t] = c * buf[f].re;
                out[plane + f * frames + t] = if edge { T::zero() } else { c * buf[f].im };
            }
        }
        Ok(out)
    }
}
