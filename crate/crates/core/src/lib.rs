//! Orientation-covariant aggregation of local image descriptors.
//!
//! Each local descriptor is embedded, modulated by an explicit feature map of
//! its dominant orientation and summed into one fixed-length image vector.
//! Inner products of image vectors approximate a match kernel that weighs
//! descriptor similarity by orientation agreement, and a global rotation of
//! an image acts on its vector as a 2D rotation per frequency block, which
//! makes rotation-invariant scoring cheap.

pub mod angle_map;
pub mod embed;
pub mod error;
pub mod eval;
pub mod formats;
pub mod histogram;
pub mod modulate;
pub mod monomial;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod pipeline;
pub mod postprocess;
pub mod scoring;
pub mod synth;
pub mod training;

pub use angle_map::{
    angle_feature, fourier_coeffs, truncated_kernel, vm_kernel, AngleFamily, AngleFeature,
    AngleMapConfig, FourierCoefficients,
};
pub use embed::{DescriptorRecord, DescriptorSet, EmbeddingConfig};
pub use error::{Error, Result};
pub use modulate::{aggregate, ModulatedVector};
pub use pipeline::{EmbeddingSpec, Normalization, Pipeline, PipelineConfig};
pub use scoring::{max_score, score_cosine, score_polynomial, ScorePolynomial};
