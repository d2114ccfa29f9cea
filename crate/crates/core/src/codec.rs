//! Watermark payload and key handling, the learned bit/signal maps and BER.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn parse_hex_bits(hex: &str, len: usize, what: &'static str) -> Result<Vec<u8>> {
    let hex = hex.trim().trim_start_matches("0x");
    if !len.is_multiple_of(4) {
        return Err(Error::config(
            what,
            format!("hex form needs a multiple of 4 bits, have {len}"),
        ));
    }
    if hex.len() != len / 4 {
        return Err(Error::config(
            what,
            format!("expected {} hex digits, got {} (`{hex}`)", len / 4, hex.len()),
        ));
    }
    let mut bits = Vec::with_capacity(len);
    for c in hex.chars() {
        let d = c
            .to_digit(16)
            .ok_or_else(|| Error::config(what, format!("`{c}` is not a hex digit")))?;
        for shift in (0..4).rev() {
            bits.push(((d >> shift) & 1) as u8);
        }
    }
    Ok(bits)
}

fn bits_to_hex(bits: &[u8]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(4));
    for chunk in bits.chunks(4) {
        let mut d = 0u32;
        for (i, b) in chunk.iter().enumerate() {
            d |= (*b as u32) << (3 - i);
        }
        out.push(char::from_digit(d, 16).unwrap());
    }
    out
}

fn validate_bits(bits: &[u8], what: &'static str) -> Result<()> {
    if bits.is_empty() {
        return Err(Error::config(what, "needs at least one bit"));
    }
    if let Some(b) = bits.iter().find(|b| **b > 1) {
        return Err(Error::config(what, format!("bit value {b} is not 0 or 1")));
    }
    Ok(())
}

/// Payload bits. Hex form is big-endian: the first digit's MSB is bit 0.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WatermarkBits(Vec<u8>);

impl WatermarkBits {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        validate_bits(&bits, "watermark")?;
        Ok(WatermarkBits(bits))
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        Self::new(parse_hex_bits(hex, len, "watermark")?)
    }

    pub fn random(rng: &mut impl Rng, len: usize) -> Self {
        WatermarkBits((0..len).map(|_| rng.gen_range(0..2u8)).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.0)
    }

    /// `2 b - 1` per bit.
    pub fn signed<T: Scalar>(&self) -> Vec<T> {
        self.0
            .iter()
            .map(|b| if *b == 1 { T::one() } else { -T::one() })
            .collect()
    }

    /// BCE targets in `{0, 1}`.
    pub fn targets<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|b| T::of(*b as f64)).collect()
    }

    pub fn complement(&self) -> Self {
        WatermarkBits(self.0.iter().map(|b| 1 - b).collect())
    }
}

impl fmt::Debug for WatermarkBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "WatermarkBits({})",
            self.0.iter().map(|b| b.to_string()).collect::<String>()
        )
    }
}

/// Key bits; bit `i` gates coupling block `i + 1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct KeyBits(Vec<u8>);

impl KeyBits {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        validate_bits(&bits, "key")?;
        Ok(KeyBits(bits))
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        Self::new(parse_hex_bits(hex, len, "key")?)
    }

    /// Key whose bits are the binary digits of `index`, most significant first.
    pub fn from_index(index: u64, len: usize) -> Self {
        KeyBits((0..len).map(|i| ((index >> (len - 1 - i)) & 1) as u8).collect())
    }

    pub fn index(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, b| (acc << 1) | *b as u64)
    }

    pub fn zeros(len: usize) -> Self {
        KeyBits(vec![0; len])
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.0)
    }
}

impl fmt::Debug for KeyBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KeyBits({})",
            self.0.iter().map(|b| b.to_string()).collect::<String>()
        )
    }
}

impl fmt::Display for KeyBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len().is_multiple_of(4) {
            f.write_str(&self.to_hex())
        } else {
            f.write_str(&self.0.iter().map(|b| b.to_string()).collect::<String>())
        }
    }
}

/// Bit error rate in percent.
pub fn ber(a: &WatermarkBits, b: &WatermarkBits) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Length {
            what: "ber",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let wrong = a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count();
    Ok(100.0 * wrong as f64 / a.len() as f64)
}

/// Uniformly samples a key of `len` bits that is not in `exclude`.
pub fn sample_key(rng: &mut impl Rng, len: usize, exclude: &HashSet<KeyBits>) -> Result<KeyBits> {
    if len == 0 || len > 63 {
        return Err(Error::config("key length", format!("{len} is outside 1..=63")));
    }
    let space = 1u64 << len;
    let excluded = exclude.iter().filter(|k| k.len() == len).count() as u64;
    if excluded >= space {
        return Err(Error::KeySpaceExhausted {
            bits: len,
            excluded: excluded as usize,
        });
    }
    if excluded * 2 > space {
        // dense exclusion: pick directly among the remaining keys
        let allowed: Vec<u64> = (0..space)
            .filter(|i| !exclude.contains(&KeyBits::from_index(*i, len)))
            .collect();
        return Ok(KeyBits::from_index(allowed[rng.gen_range(0..allowed.len())], len));
    }
    loop {
        let k = KeyBits::from_index(rng.gen_range(0..space), len);
        if !exclude.contains(&k) {
            return Ok(k);
        }
    }
}

/// Logits and the bits they threshold to.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub logits: Vec<f32>,
    pub bits: WatermarkBits,
}

impl Decoded {
    /// `bit = 1` iff `sigmoid(logit) > 0.5`; an exact tie decodes to 0.
    pub fn from_logits(logits: Vec<f32>) -> Self {
        let bits = WatermarkBits(logits.iter().map(|z| (*z > 0.0) as u8).collect());
        Decoded { logits, bits }
    }

    pub fn confidences(&self) -> Vec<f32> {
        self.logits.iter().map(|z| crate::autodiff::sigmoid(*z)).collect()
    }
}

/// Learned bias-free maps between payload bits and a time-domain signal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodecParams {
    /// `(L, S)`: signed bits to signal.
    pub embed: ParamId,
    /// `(S, L)`: signal to logits.
    pub map: ParamId,
    pub bits: usize,
    pub signal_len: usize,
}

impl CodecParams {
    pub fn new(set: &mut ParamSet, bits: usize, signal_len: usize, init_std: f32, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0f32, init_std).expect("positive std");
        let embed = set.add(
            "codec.embed",
            Tensor::from_fn(&[bits, signal_len], |_| normal.sample(rng)),
        );
        let map = set.add(
            "codec.map",
            Tensor::from_fn(&[signal_len, bits], |_| normal.sample(rng)),
        );
        CodecParams {
            embed,
            map,
            bits,
            signal_len,
        }
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.embed, self.map]
    }

    /// Graph form of [`bits_to_signal`].
    pub fn encode<'g, T: Scalar>(&self, p: &Bound<'g, T>, wm: &WatermarkBits) -> Result<Var<'g, T>> {
        if wm.len() != self.bits {
            return Err(Error::Length {
                what: "watermark",
                expected: self.bits,
                actual: wm.len(),
            });
        }
        let g = p.var(self.embed).graph();
        let s = g.constant(Tensor::from_parts(vec![1, self.bits], wm.signed()));
        s.matmul(p.var(self.embed))?.reshape(&[self.signal_len])
    }

    /// Graph form of [`signal_to_bits`], returning logits.
    pub fn decode<'g, T: Scalar>(&self, p: &Bound<'g, T>, sig: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = sig.shape();
        if shape != [self.signal_len] {
            return Err(Error::Length {
                what: "decoded signal",
                expected: self.signal_len,
                actual: shape.iter().product(),
            });
        }
        sig.reshape(&[1, self.signal_len])?
            .matmul(p.var(self.map))?
            .reshape(&[self.bits])
    }
}

/// Synthesizes the time-domain watermark signal for a payload.
pub fn bits_to_signal(wm: &WatermarkBits, codec: &CodecParams, set: &ParamSet) -> Result<Vec<f32>> {
    let g = Graph::<f32>::new();
    let p = set.bind(&g, false);
    Ok(codec.encode(&p, wm)?.value().data().to_vec())
}

/// Reads logits and thresholded bits from a recovered signal.
pub fn signal_to_bits(sig: &[f32], codec: &CodecParams, set: &ParamSet) -> Result<Decoded> {
    let g = Graph::<f32>::new();
    let p = set.bind(&g, false);
    let s = g.constant(Tensor::from_parts(vec![sig.len()], sig.to_vec()));
    let logits = codec.decode(&p, s)?.value().data().to_vec();
    Ok(Decoded::from_logits(logits))
}
