//! `CSID1` dataset files.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `CSID` |
//! | 4     | version `u32` (= 1) |
//! | 40    | dims `u64 × 5`: N, links, 2, subcarriers, taps |
//! | 8     | sampling interval `f64` (seconds) |
//! | 8·N·F | CSI payload `f64`, row-major |
//! | 16·N  | positions `f64`, N rows of (x, y) |
//! | 4     | CRC-32 (IEEE) of the CSI and position bytes |

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{CsiDataset, CsiShape};
use crate::error::{Error, Result};
use crate::ndkernel::Matrix;

pub const CSID_MAGIC: &[u8; 4] = b"CSID";
pub const CSID_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 5 * 8 + 8;

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Serialises `d` to bytes.
pub fn encode_dataset(d: &CsiDataset) -> Vec<u8> {
    let shape = d.shape();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * (d.csi().len() + 2 * shape.samples) + 4);
    buf.extend_from_slice(CSID_MAGIC);
    buf.extend_from_slice(&CSID_VERSION.to_le_bytes());
    for dim in shape.dims() {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    buf.extend_from_slice(&d.sampling_interval.to_le_bytes());
    let body_start = buf.len();
    for v in d.csi().iter().chain(d.positions().as_slice()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[body_start..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Parses a `CSID1` image.
pub fn decode_dataset(bytes: &[u8]) -> Result<CsiDataset> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if &bytes[0..4] != CSID_MAGIC {
        return Err(format_err(0, "bad magic, expected CSID"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CSID_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let mut dims = [0u64; 5];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 8 + 8 * i;
        *d = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    }
    if dims[2] != 2 {
        return Err(format_err(24, format!("complex axis must have length 2, got {}", dims[2])));
    }
    let interval = f64::from_le_bytes(bytes[48..56].try_into().unwrap());
    if !interval.is_finite() {
        return Err(format_err(48, "non-finite sampling interval"));
    }

    let to_usize = |v: u64, at: usize| usize::try_from(v).map_err(|_| format_err(at, "dimension overflows usize"));
    let shape = CsiShape {
        samples: to_usize(dims[0], 8)?,
        links: to_usize(dims[1], 16)?,
        subcarriers: to_usize(dims[3], 32)?,
        taps: to_usize(dims[4], 40)?,
    };
    let n_values = shape
        .samples
        .checked_mul(shape.features())
        .and_then(|v| v.checked_add(2 * shape.samples))
        .ok_or_else(|| format_err(8, "dimensions overflow"))?;
    let expected = n_values
        .checked_mul(8)
        .and_then(|v| v.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| format_err(8, "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(format_err(
            bytes.len().min(expected),
            format!(
                "header {:?} implies {expected} bytes ({} f64 values), file has {}",
                shape.dims(),
                n_values,
                bytes.len()
            ),
        ));
    }

    let body = &bytes[HEADER_LEN..expected - 4];
    let stored_crc = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    let crc = crc32fast::hash(body);
    if crc != stored_crc {
        return Err(format_err(expected - 4, format!("CRC mismatch: stored {stored_crc:#010x}, computed {crc:#010x}")));
    }

    let mut values = Vec::with_capacity(n_values);
    for (i, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 8 * i, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    let positions = values.split_off(shape.len());
    let positions = Matrix::from_vec(shape.samples, 2, positions)?;
    CsiDataset::new(shape, values, positions, interval, "csid1")
}

/// Writes `d` to `path` atomically (temporary file, then rename).
pub fn save_dataset(d: &CsiDataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_dataset(d))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<CsiDataset> {
    decode_dataset(&fs::read(path)?)
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads `x,y` rows into an `N × 2` matrix. A non-numeric first row is
/// treated as a header.
pub fn load_positions_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Contract(format!(
                "positions CSV line {}: expected 2 fields, got {}",
                line + 1,
                record.len()
            )));
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(xy) if xy.iter().all(|v| v.is_finite()) => data.extend(xy),
            Ok(_) => {
                return Err(Error::Contract(format!("positions CSV line {}: non-finite value", line + 1)));
            }
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Contract(format!("positions CSV line {}: {e}", line + 1))),
        }
    }
    let n = data.len() / 2;
    Matrix::from_vec(n, 2, data)
}
