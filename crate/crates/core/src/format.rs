//! Little-endian binary containers shared by tensors, datasets and network
//! weights.
//!
//! ```text
//! tensor : "EDMT" u32 version=1 · u32 rank · u32 dims[rank] · f64 payload[prod(dims)]
//! dataset: "EDMD" u32 version=1 · u32 count · tensor[count]
//! ```

use std::io::Write;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"EDMT";
pub const DATASET_MAGIC: &[u8; 4] = b"EDMD";
pub const FORMAT_VERSION: u32 = 1;

/// Cursor over a byte slice that reports failures with their byte offset.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        self.fail_at(self.pos as u64, message)
    }

    pub fn fail_at<T>(&self, offset: u64, message: impl Into<String>) -> Result<T> {
        Err(Error::Format { offset, message: message.into() })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return self.fail(format!("truncated {what}: need {n} bytes, {remaining} left"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.offset();
        let got = self.take(4, "magic")?;
        if got != magic {
            return self.fail_at(
                at,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(magic)),
            );
        }
        Ok(())
    }

    pub fn expect_version(&mut self, version: u32) -> Result<()> {
        let at = self.offset();
        let got = self.u32("version")?;
        if got != version {
            return self.fail_at(at, format!("unsupported version {got}, expected {version}"));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format { offset: self.offset(), message: "payload size overflow".into() })?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn write_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn dim_u32(d: usize) -> Result<u32> {
    u32::try_from(d).map_err(|_| Error::Argument(format!("dimension {d} exceeds u32")))
}

pub fn encode_tensor(out: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    out.extend_from_slice(TENSOR_MAGIC);
    write_u32(out, FORMAT_VERSION);
    write_u32(out, dim_u32(t.shape().len())?);
    for &d in t.shape() {
        write_u32(out, dim_u32(d)?);
    }
    write_f64s(out, t.data());
    Ok(())
}

pub fn decode_tensor(r: &mut ByteReader<'_>) -> Result<Tensor> {
    let start = r.offset();
    r.expect_magic(TENSOR_MAGIC)?;
    r.expect_version(FORMAT_VERSION)?;
    let rank = r.u32("rank")? as usize;
    if rank == 0 {
        return r.fail("tensor rank must be >= 1");
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = r.offset();
        let d = r.u32("dimension")? as usize;
        if d == 0 {
            return r.fail_at(at, "zero-sized dimension");
        }
        shape.push(d);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format { offset: start, message: "element count overflow".into() })?;
    let payload_at = r.offset();
    let data = r.f64s(len, "tensor payload")?;
    Tensor::new(shape, data).map_err(|e| Error::Format { offset: payload_at, message: e.to_string() })
}

pub fn tensor_to_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * t.shape().len() + 8 * t.len());
    encode_tensor(&mut out, t)?;
    Ok(out)
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes);
    let t = decode_tensor(&mut r)?;
    if !r.is_at_end() {
        return r.fail("trailing bytes after tensor");
    }
    Ok(t)
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<std::path::Path>) -> Result<()> {
    let bytes = tensor_to_bytes(t)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<std::path::Path>) -> Result<Tensor> {
    tensor_from_bytes(&std::fs::read(path)?)
}
