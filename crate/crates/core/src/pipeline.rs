//! End-to-end encoding: descriptor preprocessing, embedding, modulation,
//! aggregation and post-processing, configured from a serialisable manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::angle_map::{fourier_coeffs, AngleMapConfig, FourierCoefficients};
use crate::embed::{l2_normalize, preprocess, rootsift, DescriptorSet, EmbeddingConfig};
use crate::error::{check_dim, Error, Result};
use crate::formats::{read_descriptor_file, read_model, EmbeddingFamily, VectorLayout};
use crate::modulate::{aggregate, ModulatedVector};
use crate::monomial::MonomialConfig;
use crate::postprocess::{
    adapted_power_law, power_law_in_place, truncate_l2, RnModel, POWER_LAW_CODEBOOK,
    POWER_LAW_MONOMIAL,
};
use crate::training::PcaModel;

/// Descriptor coding, with model files for the codebook families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    /// `dim` is the descriptor dimension after preprocessing.
    Monomial {
        degree: u32,
        dim: usize,
    },
    Vlad {
        codebook: PathBuf,
    },
    Fisher {
        gmm: PathBuf,
    },
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

/// Everything needed to reproduce an encoding run. Written by `--emit-manifest`
/// and read back by `--manifest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub embedding: EmbeddingSpec,
    /// Apply RootSIFT to files flagged as raw SIFT.
    #[serde(default = "yes")]
    pub rootsift: bool,
    #[serde(default)]
    pub pca: Option<PathBuf>,
    #[serde(default)]
    pub angle: AngleMapConfig,
    /// Power-law exponent; the family default when absent.
    #[serde(default)]
    pub power_law: Option<f64>,
    /// Apply the power law to the modulus of each cos/sin pair instead.
    #[serde(default)]
    pub adapted_power_law: bool,
    #[serde(default)]
    pub rn: Option<PathBuf>,
    #[serde(default)]
    pub truncate: Option<usize>,
    #[serde(default = "one")]
    pub rotations: usize,
}

impl PipelineConfig {
    pub fn new(embedding: EmbeddingSpec) -> Self {
        Self {
            embedding,
            rootsift: true,
            pca: None,
            angle: AngleMapConfig::default(),
            power_law: None,
            adapted_power_law: false,
            rn: None,
            truncate: None,
            rotations: 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::parse(
                0,
                format!("manifest line {} column {}: {e}", e.line(), e.column()),
            )
        })
    }
}

/// Component-wise normalisation applied to the aggregated vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    /// Keep the L2-normalised aggregate.
    None,
    PowerLaw(f64),
    /// Power law on the modulus of each cos/sin pair; commutes with block rotations.
    Adapted(f64),
}

/// Loaded models plus encoding parameters.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub rootsift: bool,
    pub pca: Option<PcaModel>,
    /// Project onto the PCA output dimension (otherwise rotate only).
    pub reduce: bool,
    pub embedding: EmbeddingConfig,
    pub coeffs: FourierCoefficients,
    pub normalization: Normalization,
    pub rn: Option<RnModel>,
    pub truncate: Option<usize>,
}

fn default_exponent(emb: &EmbeddingConfig) -> f64 {
    match emb {
        EmbeddingConfig::Monomial(_) => POWER_LAW_MONOMIAL,
        _ => POWER_LAW_CODEBOOK,
    }
}

impl Pipeline {
    /// Plain power law with the family default, no PCA, RN or truncation.
    /// VLAD keeps the full PCA dimension when a PCA model is added.
    pub fn new(embedding: EmbeddingConfig, coeffs: FourierCoefficients) -> Self {
        let reduce = !matches!(embedding, EmbeddingConfig::Vlad(_));
        Self {
            rootsift: true,
            pca: None,
            reduce,
            normalization: Normalization::PowerLaw(default_exponent(&embedding)),
            embedding,
            coeffs,
            rn: None,
            truncate: None,
        }
    }

    pub fn with_pca(mut self, pca: PcaModel) -> Self {
        self.pca = Some(pca);
        self
    }

    pub fn with_normalization(mut self, n: Normalization) -> Self {
        self.normalization = n;
        self
    }

    pub fn with_rn(mut self, rn: RnModel) -> Self {
        self.rn = Some(rn);
        self
    }

    pub fn with_truncate(mut self, dims: usize) -> Self {
        self.truncate = Some(dims);
        self
    }

    /// Loads model files referenced by `config` and checks dimensions.
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        let embedding = match &config.embedding {
            EmbeddingSpec::Monomial { degree, dim } => {
                EmbeddingConfig::Monomial(MonomialConfig::new(*degree, *dim)?)
            }
            EmbeddingSpec::Vlad { codebook } => {
                EmbeddingConfig::Vlad(read_model(codebook)?.into_codebook()?)
            }
            EmbeddingSpec::Fisher { gmm } => EmbeddingConfig::Fisher(read_model(gmm)?.into_gmm()?),
        };
        let coeffs = fourier_coeffs(&config.angle)?;
        let mut p = Pipeline::new(embedding, coeffs);
        p.rootsift = config.rootsift;
        if let Some(path) = &config.pca {
            p.pca = Some(read_model(path)?.into_pca()?);
        }
        let a = config
            .power_law
            .unwrap_or_else(|| default_exponent(&p.embedding));
        p.normalization = if config.adapted_power_law {
            Normalization::Adapted(a)
        } else {
            Normalization::PowerLaw(a)
        };
        if let Some(path) = &config.rn {
            p.rn = Some(read_model(path)?.into_rn()?);
        }
        p.truncate = config.truncate;
        p.validate()?;
        Ok(p)
    }

    /// Checks that the model dimensions chain together.
    pub fn validate(&self) -> Result<()> {
        if let Some(pca) = &self.pca {
            let d = if self.reduce {
                pca.output_dim()
            } else {
                pca.input_dim()
            };
            check_dim(d, self.embedding.input_dim())?;
        }
        let agg = self.modulated_dim();
        if let Some(rn) = &self.rn {
            check_dim(agg, rn.dim())?;
        }
        if let Some(t) = self.truncate {
            if t == 0 || t > agg {
                return Err(Error::contract(format!(
                    "truncation to {t} dims is outside 1..={agg}"
                )));
            }
        }
        Ok(())
    }

    fn modulated_dim(&self) -> usize {
        self.embedding.output_dim() * self.coeffs.feature_dim()
    }

    /// Length of the encoded vectors.
    pub fn output_dim(&self) -> usize {
        self.truncate.unwrap_or_else(|| self.modulated_dim())
    }

    /// Whether encoded vectors keep the frequency-block layout.
    pub fn keeps_layout(&self) -> bool {
        self.rn.is_none() && self.truncate.is_none()
    }

    pub fn layout(&self) -> VectorLayout {
        let family = EmbeddingFamily::from_name(self.embedding.family_name())
            .expect("known embedding family");
        let projected = !self.keeps_layout();
        VectorLayout {
            base_dim: if projected {
                self.output_dim()
            } else {
                self.embedding.output_dim()
            },
            n_freq: self.coeffs.n_freq(),
            family,
            projected,
        }
    }

    /// Reads a descriptor file, applying RootSIFT if it holds raw SIFT.
    pub fn load_descriptors(&self, path: &Path) -> Result<DescriptorSet> {
        let file = read_descriptor_file(path)?;
        if self.rootsift && file.is_raw_sift() {
            file.set.map_descriptors(rootsift)
        } else {
            Ok(file.set)
        }
    }

    /// PCA projection (or plain L2 normalisation without a PCA model).
    /// Independent of angles, so it can be shared across query rotations.
    pub fn prepare(&self, set: &DescriptorSet) -> Result<DescriptorSet> {
        match &self.pca {
            Some(pca) => set.map_descriptors(|x| preprocess(x, pca, self.reduce)),
            None => set.map_descriptors(|x| {
                let mut y = x.to_vec();
                if l2_normalize(&mut y) == 0.0 {
                    return Err(Error::degenerate("zero descriptor"));
                }
                Ok(y)
            }),
        }
    }

    /// Aggregation and the layout-preserving normalisation.
    pub fn encode_modulated(&self, prepared: &DescriptorSet) -> Result<ModulatedVector> {
        let x = aggregate(prepared, &self.embedding, &self.coeffs)?;
        match self.normalization {
            Normalization::None => Ok(x),
            Normalization::PowerLaw(a) => {
                let (base, nf) = (x.base_dim(), x.n_freq());
                let mut v = x.into_vec();
                power_law_in_place(&mut v, a)?;
                ModulatedVector::from_parts(base, nf, v)
            }
            Normalization::Adapted(a) => adapted_power_law(&x, a),
        }
    }

    /// Full encoding of an already prepared set.
    pub fn encode_prepared(&self, prepared: &DescriptorSet) -> Result<Vec<f64>> {
        let mut v = self.encode_modulated(prepared)?.into_vec();
        if let Some(rn) = &self.rn {
            v = rn.apply(&v)?;
        }
        if let Some(t) = self.truncate {
            v = truncate_l2(&v, t)?;
        }
        Ok(v)
    }

    pub fn encode(&self, set: &DescriptorSet) -> Result<Vec<f64>> {
        self.encode_prepared(&self.prepare(set)?)
    }
}
