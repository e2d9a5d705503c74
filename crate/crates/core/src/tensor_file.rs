//! `RVIMG1` tensor container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0   6 bytes   magic "RVIMG1"
//! offset 6   u32       H
//! offset 10  u32       W
//! offset 14  u32       C
//! offset 18  f32 * H*W*C, row-major, channel-minor
//! ```
//!
//! Files are byte-identical across platforms for identical inputs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"RVIMG1";
pub const HEADER_LEN: usize = 18;

/// Dense `H x W x C` float grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: (usize, usize, usize),
    data: Vec<f32>,
}

impl Tensor {
    /// Rejects zero dimensions, mismatched lengths and non-finite values.
    pub fn new(dims: (usize, usize, usize), data: Vec<f32>) -> Result<Self> {
        let (h, w, c) = dims;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::DegenerateDims(h, w, c));
        }
        if h > u32::MAX as usize || w > u32::MAX as usize || c > u32::MAX as usize {
            return Err(Error::DimsOverflow {
                h: h.min(u32::MAX as usize) as u32,
                w: w.min(u32::MAX as usize) as u32,
                c: c.min(u32::MAX as usize) as u32,
            });
        }
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or(Error::DimsOverflow {
                h: h as u32,
                w: w as u32,
                c: c as u32,
            })?;
        if data.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Tensor { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (h, w, c) = self.dims;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.extend_from_slice(&(w as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let mut magic = [0u8; 6];
        magic.copy_from_slice(&bytes[..6]);
        if &magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let (h, w, c) = (word(6), word(10), word(14));
        let expected = (h as usize)
            .checked_mul(w as usize)
            .and_then(|v| v.checked_mul(c as usize))
            .and_then(|v| v.checked_mul(4))
            .ok_or(Error::DimsOverflow { h, w, c })?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::new((h as usize, w as usize, c as usize), data)
    }
}

/// Writes `data` as an `RVIMG1` file.
pub fn write_tensor(path: impl AsRef<Path>, dims: (usize, usize, usize), data: &[f32]) -> Result<()> {
    let t = Tensor::new(dims, data.to_vec())?;
    save(path, &t)
}

/// Reads an `RVIMG1` file back into its dims and payload.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<((usize, usize, usize), Vec<f32>)> {
    let t = load(path)?;
    Ok((t.dims(), t.into_data()))
}

pub fn save(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}
