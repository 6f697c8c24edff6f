//! The `QPT1` dense tensor container.
//!
//! Layout (all multi-byte fields little-endian):
//!
//! ```text
//! magic  : 4 bytes, ASCII "QPT1"
//! rank   : u32, 1..=4
//! dims   : rank × u32, each >= 1
//! data   : product(dims) × f32, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"QPT1";
pub const MAX_RANK: usize = 4;

/// A dense row-major `f32` array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::Shape(format!(
                "rank must be in [1, {MAX_RANK}], got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Shape(format!("all dims must be >= 1, got {dims:?}")));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Shape(format!("dim exceeds u32 range: {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    /// Promotes `f64` values to a tensor (rounding to `f32`).
    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn encoded_len(&self) -> usize {
        4 + 4 + 4 * self.dims.len() + 4 * self.data.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"QPT1\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let rank = cursor.u32("rank")? as usize;
        if !(1..=MAX_RANK).contains(&rank) {
            return Err(Error::Format(format!(
                "rank {rank} outside [1, {MAX_RANK}]"
            )));
        }
        let mut dims = Vec::with_capacity(rank);
        for i in 0..rank {
            let d = cursor.u32("dims")? as usize;
            if d == 0 {
                return Err(Error::Format(format!("dim {i} is zero")));
            }
            dims.push(d);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("element count overflows for dims {dims:?}")))?;
        let payload = numel
            .checked_mul(4)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let raw = cursor.take(payload, "data")?;
        if cursor.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after data",
                bytes.len() - cursor.pos
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}
