//! Per-descriptor preprocessing and embeddings.

use crate::angle_map::wrap_angle;
use crate::error::{check_dim, Error, Result};
use crate::monomial::{check_unit, phi_monomial_into, MonomialConfig};
use crate::training::{CodebookModel, GmmModel, PcaModel};

/// A local descriptor and its dominant orientation, wrapped into `(-pi, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorRecord {
    pub descriptor: Vec<f64>,
    pub angle: f64,
}

impl DescriptorRecord {
    pub fn new(descriptor: Vec<f64>, angle: f64) -> Self {
        Self {
            descriptor,
            angle: wrap_angle(angle),
        }
    }
}

/// All oriented descriptors of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    pub image_id: String,
    records: Vec<DescriptorRecord>,
}

impl DescriptorSet {
    /// Fails if descriptors disagree on dimension or angles are not finite.
    /// An empty set is valid here; encoding rejects it.
    pub fn new(image_id: impl Into<String>, records: Vec<DescriptorRecord>) -> Result<Self> {
        if let Some(first) = records.first() {
            let d = first.descriptor.len();
            for r in &records {
                check_dim(d, r.descriptor.len())?;
                if !r.angle.is_finite() || r.descriptor.iter().any(|v| !v.is_finite()) {
                    return Err(Error::contract("descriptor set contains non-finite values"));
                }
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            records,
        })
    }

    pub fn records(&self) -> &[DescriptorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Descriptor dimension, `None` for an empty set.
    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.descriptor.len())
    }

    /// Copy with every angle shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            image_id: self.image_id.clone(),
            records: self
                .records
                .iter()
                .map(|r| DescriptorRecord::new(r.descriptor.clone(), r.angle + delta))
                .collect(),
        }
    }

    /// Applies `f` to every descriptor, keeping angles.
    pub fn map_descriptors<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(DescriptorRecord {
                    descriptor: f(&r.descriptor)?,
                    angle: r.angle,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DescriptorSet::new(self.image_id.clone(), records)
    }
}

/// L1 normalisation followed by a component-wise square root.
pub fn rootsift(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::contract(
            "RootSIFT input must be finite and non-negative",
        ));
    }
    let l1: f64 = raw.iter().sum();
    if l1 == 0.0 {
        return Err(Error::degenerate("RootSIFT input is all zero"));
    }
    Ok(raw.iter().map(|v| (v / l1).sqrt()).collect())
}

pub(crate) fn l2_normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    norm
}

/// Centers and rotates `x` with the PCA basis, optionally dropping the
/// trailing components, and re-normalises to unit length.
///
/// Without reduction the PCA model must keep the full input dimension.
pub fn preprocess(x: &[f64], pca: &PcaModel, reduce: bool) -> Result<Vec<f64>> {
    if !reduce && pca.output_dim() != pca.input_dim() {
        return Err(Error::contract(format!(
            "rotation-only preprocessing needs a full PCA basis ({} of {} components)",
            pca.output_dim(),
            pca.input_dim()
        )));
    }
    let mut y = pca.project(x)?;
    if l2_normalize(&mut y) == 0.0 {
        return Err(Error::degenerate("descriptor vanishes after PCA centering"));
    }
    Ok(y)
}

/// Coding applied to each (preprocessed) descriptor before modulation.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingConfig {
    Monomial(MonomialConfig),
    Vlad(CodebookModel),
    /// Gradient with respect to the component means only.
    Fisher(GmmModel),
}

impl EmbeddingConfig {
    pub fn input_dim(&self) -> usize {
        match self {
            EmbeddingConfig::Monomial(c) => c.input_dim,
            EmbeddingConfig::Vlad(m) => m.dim(),
            EmbeddingConfig::Fisher(m) => m.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            EmbeddingConfig::Monomial(c) => c.output_dim(),
            EmbeddingConfig::Vlad(m) => m.k() * m.dim(),
            EmbeddingConfig::Fisher(m) => m.k() * m.dim(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            EmbeddingConfig::Monomial(_) => "monomial",
            EmbeddingConfig::Vlad(_) => "vlad",
            EmbeddingConfig::Fisher(_) => "fisher",
        }
    }

    /// Writes `phi(x)` into `out` (length [`output_dim`](Self::output_dim)).
    pub fn embed_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.output_dim(), out.len())?;
        match self {
            EmbeddingConfig::Monomial(c) => {
                check_unit(x)?;
                phi_monomial_into(x, c.degree, out);
            }
            EmbeddingConfig::Vlad(codebook) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let d = codebook.dim();
                let (a, _) = codebook.nearest(x);
                let block = &mut out[a * d..(a + 1) * d];
                for ((b, xi), ci) in block.iter_mut().zip(x).zip(codebook.centroid(a)) {
                    *b = xi - ci;
                }
                l2_normalize(block);
            }
            EmbeddingConfig::Fisher(gmm) => {
                let d = gmm.dim();
                let mut post = vec![0.0; gmm.k()];
                gmm.posteriors_into(x, &mut post);
                for (g, p) in post.iter().enumerate() {
                    let scale = p / gmm.weights()[g].sqrt();
                    let block = &mut out[g * d..(g + 1) * d];
                    for (((b, xi), m), v) in block
                        .iter_mut()
                        .zip(x)
                        .zip(gmm.mean(g))
                        .zip(gmm.variance(g))
                    {
                        *b = scale * (xi - m) / v.sqrt();
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn embed_descriptor(x: &[f64], config: &EmbeddingConfig) -> Result<Vec<f64>> {
    let mut out = vec![0.0; config.output_dim()];
    config.embed_into(x, &mut out)?;
    Ok(out)
}
