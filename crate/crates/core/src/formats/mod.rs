//! On-disk formats. Binary files are little-endian with an 8-byte magic;
//! reals are stored as 32-bit floats (descriptors, vectors) or 64-bit floats
//! (models). Every write goes to a temporary file that is renamed into place.

mod descriptor;
mod gt;
mod model;
mod vectors;

pub use descriptor::{
    decode_descriptors, encode_descriptors, read_descriptor_file, write_descriptor_file,
    DescriptorFile, DESCRIPTOR_MAGIC, FLAG_RAW_SIFT,
};
pub use gt::{format_ground_truth, parse_ground_truth, read_ground_truth, write_ground_truth};
pub use model::{decode_model, encode_model, read_model, write_model, Model, MODEL_MAGIC};
pub use vectors::{
    decode_vectors, encode_vectors, read_vector_file, write_vector_file, EmbeddingFamily,
    VectorFile, VectorLayout, VECTOR_MAGIC,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` next to `path` and renames the temporary file over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Cursor over a byte buffer that reports failures with their byte offset.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(
                self.offset(),
                format!(
                    "truncated {what}: expected {n} bytes, found {}",
                    self.remaining()
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let m = self.take(8, "header")?;
        if m != magic {
            return Err(Error::parse(
                0,
                format!(
                    "bad magic: expected {}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(m)
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.offset();
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::parse(at, format!("{what} {v} too large")))
    }

    /// Reads `n` finite f32 values.
    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.offset();
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::parse(start, format!("{what} length overflows")))?;
        let raw = self.take(bytes, what)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(Error::parse(
                        start + 4 * i as u64,
                        format!("non-finite value in {what}"),
                    ))
                }
            })
            .collect()
    }

    /// Reads `n` finite f64 values.
    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.offset();
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::parse(start, format!("{what} length overflows")))?;
        let raw = self.take(bytes, what)?;
        raw.chunks_exact(8)
            .enumerate()
            .map(|(i, c)| {
                let v = f64::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(
                        start + 8 * i as u64,
                        format!("non-finite value in {what}"),
                    ))
                }
            })
            .collect()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::parse(
                self.offset(),
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}
