//! Checkpoint files: the flat parameter vector behind a small header.
//!
//! Little-endian layout: magic `CKPT`, version `u32`, dims `U D L F` as
//! `u64`, RNG seed `u64`, parameter count `u64`, then the parameters as
//! `f64` in [`ModelParams`] flat order.

use std::path::Path;

use super::{ModelDims, ModelParams};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8; 4] = b"CKPT";
pub const CKPT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 * 8 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let flat = self.params.to_flat();
        let d = self.params.dims;
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * flat.len());
        buf.extend_from_slice(CKPT_MAGIC);
        buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        for v in [d.units, d.latent, d.seq_len, d.features] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in flat {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, reason: String| Error::Format {
            offset: offset as u64,
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(err(bytes.len(), "truncated checkpoint header".into()));
        }
        if &bytes[..4] != CKPT_MAGIC {
            return Err(err(0, "bad magic, expected CKPT".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CKPT_VERSION {
            return Err(err(4, format!("unsupported checkpoint version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let dims = ModelDims {
            units: word(0) as usize,
            latent: word(1) as usize,
            seq_len: word(2) as usize,
            features: word(3) as usize,
        };
        dims.validate().map_err(|e| err(8, e.to_string()))?;
        let seed = word(4);
        let count = word(5) as usize;
        let expected = ModelParams::zeros(dims).num_params();
        if count != expected || bytes.len() != HEADER_LEN + 8 * count {
            return Err(err(
                48,
                format!(
                    "dims {dims:?} need {expected} parameters; header says {count}, file holds {} bytes of payload",
                    bytes.len() - HEADER_LEN
                ),
            ));
        }
        let mut flat = Vec::with_capacity(count);
        for (i, c) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(err(HEADER_LEN + 8 * i, format!("non-finite parameter {v}")));
            }
            flat.push(v);
        }
        Ok(Self {
            params: ModelParams::from_flat(dims, &flat)?,
            seed,
        })
    }
}

/// Atomic write (temporary file, then rename).
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &ckpt.to_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
