//! Versioned binary model container.
//!
//! ```text
//! magic    4 bytes  "DURM"
//! version  u8
//! config   u32 LE byte length, then JSON
//! tensors  u32 LE count, then per tensor:
//!          u8 rank, rank x u64 LE dims, prod(dims) x f64 LE
//! ```
//!
//! Tensors appear in parameter declaration order and must match the shapes
//! implied by the config.

use std::io::{Read, Write};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DURM";
pub const FORMAT_VERSION: u8 = 1;

const MAX_CONFIG_BYTES: usize = 1 << 20;

pub fn save_model<W: Write>(params: &ModelParams, sink: &mut W) -> Result<()> {
    let config = serde_json::to_vec(&params.config).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    sink.write_all(MAGIC)?;
    sink.write_all(&[FORMAT_VERSION])?;
    sink.write_all(&(config.len() as u32).to_le_bytes())?;
    sink.write_all(&config)?;
    let tensors = params.tensors();
    sink.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (_, shape, data) in tensors {
        sink.write_all(&[shape.len() as u8])?;
        for d in shape {
            sink.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(data.len() * 8);
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_model_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    save_model(params, &mut out).expect("writing to memory");
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptPayload(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn load_model_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::CorruptPayload("bad magic bytes".into()));
    }
    let version = cur.u8("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config_len = cur.u32("config length")? as usize;
    if config_len > MAX_CONFIG_BYTES {
        return Err(Error::CorruptPayload("config block too large".into()));
    }
    let config: ModelConfig = serde_json::from_slice(cur.take(config_len, "config")?)
        .map_err(|e| Error::CorruptPayload(format!("config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::CorruptPayload(e.to_string()))?;

    let expected = ModelParams::shapes(&config);
    // bound the allocation before building tensors from an untrusted config
    let total: u128 = expected
        .iter()
        .map(|s| s.iter().map(|&d| d as u128).product::<u128>())
        .sum();
    if total * 8 > (bytes.len() - cur.pos) as u128 {
        return Err(Error::CorruptPayload("truncated tensor data".into()));
    }
    let count = cur.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(Error::CorruptPayload(format!(
            "{count} tensors, expected {}",
            expected.len()
        )));
    }

    let mut params = ModelParams::zeros(&config);
    for (i, (dst, shape)) in params.tensors_mut().into_iter().zip(&expected).enumerate() {
        let rank = cur.u8("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u64("tensor dims")?);
        }
        if dims.len() != shape.len() || dims.iter().zip(shape).any(|(&a, &b)| a != b as u64) {
            return Err(Error::CorruptPayload(format!(
                "tensor {i} has shape {dims:?}, expected {shape:?}"
            )));
        }
        let raw = cur.take(dst.len() * 8, "tensor data")?;
        for (d, b) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::CorruptPayload("trailing bytes after tensors".into()));
    }
    Ok(params)
}

pub fn load_model<R: Read>(source: &mut R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    load_model_bytes(&bytes)
}
