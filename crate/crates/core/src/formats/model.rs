//! `CVAGMDL1` model files.
//!
//! ```text
//! magic    8 bytes "CVAGMDL1"
//! kind     u32     1 PCA, 2 k-means codebook, 3 diagonal GMM, 4 RN
//! payload  u64 sizes followed by f64 arrays, per kind:
//!   PCA      in, out, mean[in], basis[out*in], eigenvalues[out]
//!   codebook k, dim, centroids[k*dim]
//!   GMM      k, dim, weights[k], means[k*dim], variances[k*dim]
//!   RN       dim, rank, whiten (0/1), exponent f64, mean[dim], axes[rank*dim], eigenvalues[rank]
//! ```

use std::path::Path;

use super::{put_f64s, put_u64, read_bytes, write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::postprocess::RnModel;
use crate::training::{CodebookModel, GmmModel, PcaModel};

pub const MODEL_MAGIC: &[u8; 8] = b"CVAGMDL1";

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Pca(PcaModel),
    Codebook(CodebookModel),
    Gmm(GmmModel),
    Rn(RnModel),
}

impl Model {
    fn kind(&self) -> u32 {
        match self {
            Model::Pca(_) => 1,
            Model::Codebook(_) => 2,
            Model::Gmm(_) => 3,
            Model::Rn(_) => 4,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Pca(_) => "pca",
            Model::Codebook(_) => "codebook",
            Model::Gmm(_) => "gmm",
            Model::Rn(_) => "rn",
        }
    }

    pub fn into_pca(self) -> Result<PcaModel> {
        match self {
            Model::Pca(m) => Ok(m),
            other => Err(wrong_kind("pca", &other)),
        }
    }

    pub fn into_codebook(self) -> Result<CodebookModel> {
        match self {
            Model::Codebook(m) => Ok(m),
            other => Err(wrong_kind("codebook", &other)),
        }
    }

    pub fn into_gmm(self) -> Result<GmmModel> {
        match self {
            Model::Gmm(m) => Ok(m),
            other => Err(wrong_kind("gmm", &other)),
        }
    }

    pub fn into_rn(self) -> Result<RnModel> {
        match self {
            Model::Rn(m) => Ok(m),
            other => Err(wrong_kind("rn", &other)),
        }
    }
}

fn wrong_kind(expected: &str, got: &Model) -> Error {
    Error::contract(format!(
        "expected a {expected} model, found {}",
        got.kind_name()
    ))
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&model.kind().to_le_bytes());
    match model {
        Model::Pca(m) => {
            put_u64(&mut out, m.input_dim());
            put_u64(&mut out, m.output_dim());
            put_f64s(&mut out, m.mean());
            put_f64s(&mut out, m.basis());
            put_f64s(&mut out, m.eigenvalues());
        }
        Model::Codebook(m) => {
            put_u64(&mut out, m.k());
            put_u64(&mut out, m.dim());
            put_f64s(&mut out, m.centroids());
        }
        Model::Gmm(m) => {
            put_u64(&mut out, m.k());
            put_u64(&mut out, m.dim());
            put_f64s(&mut out, m.weights());
            put_f64s(&mut out, m.means());
            put_f64s(&mut out, m.variances());
        }
        Model::Rn(m) => {
            put_u64(&mut out, m.dim());
            put_u64(&mut out, m.rank());
            put_u64(&mut out, m.whitening() as usize);
            put_f64s(&mut out, &[m.exponent()]);
            put_f64s(&mut out, m.mean());
            put_f64s(&mut out, m.axes());
            put_f64s(&mut out, m.eigenvalues());
        }
    }
    out
}

fn product(r: &ByteReader, a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b)
        .filter(|n| n.saturating_mul(8) <= r.remaining())
        .ok_or_else(|| {
            Error::parse(
                r.offset(),
                format!(
                    "declared sizes {a} x {b} exceed the {} remaining bytes",
                    r.remaining()
                ),
            )
        })
}

fn semantic(at: u64, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::parse(at, other.to_string()),
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let kind = r.u32("model kind")?;
    let at = r.offset();
    let model = match kind {
        1 => {
            let d_in = r.usize("input dimension")?;
            let d_out = r.usize("output dimension")?;
            let mean = r.f64s(d_in, "mean")?;
            let n = product(&r, d_in, d_out)?;
            let basis = r.f64s(n, "basis")?;
            let eig = r.f64s(d_out, "eigenvalues")?;
            Model::Pca(PcaModel::new(mean, basis, eig).map_err(|e| semantic(at, e))?)
        }
        2 => {
            let k = r.usize("k")?;
            let dim = r.usize("dimension")?;
            let n = product(&r, k, dim)?;
            let c = r.f64s(n, "centroids")?;
            Model::Codebook(CodebookModel::new(k, dim, c).map_err(|e| semantic(at, e))?)
        }
        3 => {
            let k = r.usize("k")?;
            let dim = r.usize("dimension")?;
            let w = r.f64s(k, "weights")?;
            let n = product(&r, k, dim)?;
            let means = r.f64s(n, "means")?;
            let vars = r.f64s(n, "variances")?;
            Model::Gmm(GmmModel::new(k, dim, w, means, vars).map_err(|e| semantic(at, e))?)
        }
        4 => {
            let dim = r.usize("dimension")?;
            let rank = r.usize("rank")?;
            let whiten = r.u64("whitening flag")?;
            if whiten > 1 {
                return Err(Error::parse(
                    r.offset() - 8,
                    "whitening flag must be 0 or 1",
                ));
            }
            let exponent = r.f64s(1, "exponent")?[0];
            let mean = r.f64s(dim, "mean")?;
            let n = product(&r, rank, dim)?;
            let axes = r.f64s(n, "axes")?;
            let eig = r.f64s(rank, "eigenvalues")?;
            let m = RnModel::from_parts(mean, axes, eig, exponent).map_err(|e| semantic(at, e))?;
            Model::Rn(m.with_whitening(whiten == 1))
        }
        other => {
            return Err(Error::parse(8, format!("unknown model kind {other}")));
        }
    };
    r.finish()?;
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<Model> {
    decode_model(&read_bytes(path)?)
}

pub fn write_model(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model))
}
