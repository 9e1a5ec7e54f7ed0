//! `CVAGDSC1` descriptor files.
//!
//! ```text
//! magic    8 bytes  "CVAGDSC1"
//! dim      u32
//! count    u64
//! flags    u32      bit 0: raw SIFT (RootSIFT not yet applied)
//! records  count x (dim f32 descriptor values, f32 angle in radians)
//! ```

use std::path::Path;

use super::{put_f32s, read_bytes, write_atomic, ByteReader};
use crate::embed::{DescriptorRecord, DescriptorSet};
use crate::error::{Error, Result};

pub const DESCRIPTOR_MAGIC: &[u8; 8] = b"CVAGDSC1";
pub const FLAG_RAW_SIFT: u32 = 1;
const HEADER_LEN: u64 = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorFile {
    pub set: DescriptorSet,
    pub flags: u32,
}

impl DescriptorFile {
    pub fn is_raw_sift(&self) -> bool {
        self.flags & FLAG_RAW_SIFT != 0
    }
}

pub fn decode_descriptors(bytes: &[u8], image_id: &str) -> Result<DescriptorFile> {
    let mut r = ByteReader::new(bytes);
    r.magic(DESCRIPTOR_MAGIC)?;
    let dim = r.u32("descriptor dimension")? as usize;
    let count = r.u64("record count")?;
    let flags = r.u32("flags")?;
    if flags & !FLAG_RAW_SIFT != 0 {
        return Err(Error::parse(20, format!("unknown flags {flags:#x}")));
    }
    let record_len = (dim as u64 + 1) * 4;
    let expected = count
        .checked_mul(record_len)
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::parse(12, format!("record count {count} overflows")))?;
    if expected != bytes.len() as u64 {
        let at = if (bytes.len() as u64) < expected {
            bytes.len() as u64
        } else {
            expected
        };
        return Err(Error::parse(
            at,
            format!(
                "payload size mismatch: expected {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    if dim == 0 && count > 0 {
        return Err(Error::parse(8, "zero descriptor dimension"));
    }
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut v = r.f32s(dim + 1, "descriptor record")?;
        let angle = v.pop().unwrap_or_default();
        records.push(DescriptorRecord::new(v, angle));
    }
    r.finish()?;
    Ok(DescriptorFile {
        set: DescriptorSet::new(image_id, records)?,
        flags,
    })
}

/// Serialises a set. Every record must share one dimension; an empty set is
/// written with dimension 0 unless `dim` is given.
pub fn encode_descriptors(set: &DescriptorSet, flags: u32, dim: Option<usize>) -> Result<Vec<u8>> {
    let d = match (set.dim(), dim) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::DimensionMismatch {
                expected: b,
                actual: a,
            })
        }
        (Some(a), _) => a,
        (None, b) => b.unwrap_or(0),
    };
    let d32 = u32::try_from(d).map_err(|_| Error::contract("descriptor dimension too large"))?;
    let mut out = Vec::with_capacity(HEADER_LEN as usize + set.len() * (d + 1) * 4);
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    for rec in set.records() {
        put_f32s(&mut out, &rec.descriptor);
        put_f32s(&mut out, &[rec.angle]);
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a descriptor file; the image id is the file stem.
pub fn read_descriptor_file(path: &Path) -> Result<DescriptorFile> {
    let bytes = read_bytes(path)?;
    decode_descriptors(&bytes, &stem(path)).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write_descriptor_file(set: &DescriptorSet, flags: u32, path: &Path) -> Result<()> {
    write_atomic(path, &encode_descriptors(set, flags, None)?)
}
