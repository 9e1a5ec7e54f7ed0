//! `CVAGVEC1` image-vector files.
//!
//! ```text
//! magic    8 bytes "CVAGVEC1"
//! count    u64
//! base_dim u32     embedding dimension D, or the total length if projected
//! n_freq   u32
//! family   u16     0 monomial, 1 VLAD, 2 Fisher
//! flags    u16     bit 0: projected (RN and/or truncation applied; block layout lost)
//! records  count x (id_len u32, id UTF-8 bytes, dim f32 values)
//! ```

use std::path::Path;

use super::{put_f32s, read_bytes, write_atomic, ByteReader};
use crate::error::{check_dim, Error, Result};

pub const VECTOR_MAGIC: &[u8; 8] = b"CVAGVEC1";
const FLAG_PROJECTED: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingFamily {
    Monomial = 0,
    Vlad = 1,
    Fisher = 2,
}

impl EmbeddingFamily {
    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(Self::Monomial),
            1 => Some(Self::Vlad),
            2 => Some(Self::Fisher),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "monomial" => Some(Self::Monomial),
            "vlad" => Some(Self::Vlad),
            "fisher" => Some(Self::Fisher),
            _ => None,
        }
    }
}

/// How the values of each vector are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VectorLayout {
    pub base_dim: usize,
    pub n_freq: usize,
    pub family: EmbeddingFamily,
    pub projected: bool,
}

impl VectorLayout {
    pub fn dim(&self) -> usize {
        if self.projected {
            self.base_dim
        } else {
            self.base_dim * (2 * self.n_freq + 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFile {
    pub layout: VectorLayout,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl VectorFile {
    pub fn new(layout: VectorLayout) -> Self {
        Self {
            layout,
            ids: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        check_dim(self.layout.dim(), v.len())?;
        self.ids.push(id.into());
        self.vectors.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode_vectors(file: &VectorFile) -> Result<Vec<u8>> {
    let l = &file.layout;
    check_dim(file.ids.len(), file.vectors.len())?;
    let base = u32::try_from(l.base_dim).map_err(|_| Error::contract("dimension too large"))?;
    let nf = u32::try_from(l.n_freq).map_err(|_| Error::contract("n_freq too large"))?;
    let mut out = Vec::new();
    out.extend_from_slice(VECTOR_MAGIC);
    out.extend_from_slice(&(file.len() as u64).to_le_bytes());
    out.extend_from_slice(&base.to_le_bytes());
    out.extend_from_slice(&nf.to_le_bytes());
    out.extend_from_slice(&(l.family as u16).to_le_bytes());
    let flags = if l.projected { FLAG_PROJECTED } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for (id, v) in file.ids.iter().zip(&file.vectors) {
        check_dim(l.dim(), v.len())?;
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        put_f32s(&mut out, v);
    }
    Ok(out)
}

pub fn decode_vectors(bytes: &[u8]) -> Result<VectorFile> {
    let mut r = ByteReader::new(bytes);
    r.magic(VECTOR_MAGIC)?;
    let count = r.u64("vector count")?;
    let base_dim = r.u32("base dimension")? as usize;
    let n_freq = r.u32("frequency count")? as usize;
    let fam_at = r.offset();
    let fam = r.u16("family")?;
    let family = EmbeddingFamily::from_code(fam)
        .ok_or_else(|| Error::parse(fam_at, format!("unknown embedding family {fam}")))?;
    let flags = r.u16("flags")?;
    if flags & !FLAG_PROJECTED != 0 {
        return Err(Error::parse(
            fam_at + 2,
            format!("unknown flags {flags:#x}"),
        ));
    }
    let layout = VectorLayout {
        base_dim,
        n_freq,
        family,
        projected: flags & FLAG_PROJECTED != 0,
    };
    let mut file = VectorFile::new(layout);
    for _ in 0..count {
        let len = r.u32("id length")? as usize;
        let at = r.offset();
        let id = std::str::from_utf8(r.take(len, "image id")?)
            .map_err(|_| Error::parse(at, "image id is not UTF-8"))?
            .to_owned();
        let v = r.f32s(layout.dim(), "vector")?;
        file.ids.push(id);
        file.vectors.push(v);
    }
    r.finish()?;
    Ok(file)
}

pub fn read_vector_file(path: &Path) -> Result<VectorFile> {
    decode_vectors(&read_bytes(path)?)
}

pub fn write_vector_file(file: &VectorFile, path: &Path) -> Result<()> {
    write_atomic(path, &encode_vectors(file)?)
}
