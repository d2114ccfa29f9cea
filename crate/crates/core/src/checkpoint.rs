//! Binary tensor container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "WAKE" | version | metadata length | metadata (UTF-8 TOML)
//! | tensor count | { name length | name | rank | dims.. | f32 data.. }*
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WAKE";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn get_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    r.take(n as u64).read_to_end(&mut v)?;
    if v.len() != n {
        return Err(Error::Checkpoint(format!(
            "truncated file: wanted {n} bytes, got {}",
            v.len()
        )));
    }
    Ok(v)
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION as usize)?;
        put_u32(w, self.metadata.len())?;
        w.write_all(self.metadata.as_bytes())?;
        put_u32(w, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(w, name.len())?;
            w.write_all(name.as_bytes())?;
            put_u32(w, t.shape().len())?;
            for d in t.shape() {
                put_u32(w, *d)?;
            }
            let mut buf = Vec::with_capacity(4 * t.len());
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic = get_bytes(r, 4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic bytes)".into()));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {VERSION}"
            )));
        }
        let len = get_u32(r)? as usize;
        let metadata =
            String::from_utf8(get_bytes(r, len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let count = get_u32(r)?;
        let mut tensors = Vec::with_capacity(count.min(4096) as usize);
        for _ in 0..count {
            let n = get_u32(r)? as usize;
            let name =
                String::from_utf8(get_bytes(r, n)?).map_err(|e| Error::Checkpoint(format!("tensor name: {e}")))?;
            let rank = get_u32(r)? as usize;
            let shape: Vec<usize> = (0..rank)
                .map(|_| get_u32(r).map(|d| d as usize))
                .collect::<Result<_>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
            let raw = get_bytes(r, numel * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        Ok(Checkpoint { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}
