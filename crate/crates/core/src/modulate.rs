//! Angle modulation and aggregation into a single image vector.
//!
//! The modulated embedding of `(x, theta)` is the Kronecker product
//! `phi(x) (x) alpha(theta)`, stored frequency-major: the image vector is the
//! concatenation of `2N + 1` blocks of length `D`,
//! `[X0, X1c, X1s, .., XNc, XNs]`. A global rotation of the image acts on each
//! `(Xnc, Xns)` pair as a plane rotation by `n theta`.

use rayon::prelude::*;

use crate::angle_map::{AngleFeature, FourierCoefficients};
use crate::embed::{DescriptorSet, EmbeddingConfig};
use crate::error::{check_dim, Error, Result};

/// Records per leaf of the fixed summation tree.
const CHUNK: usize = 64;

/// Position of angle-feature component `t` in the frequency-major block order.
#[inline]
pub fn block_of_feature(t: usize, n_freq: usize) -> usize {
    if t == 0 {
        0
    } else if t <= n_freq {
        2 * t - 1
    } else {
        2 * (t - n_freq)
    }
}

/// An image vector with its block layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulatedVector {
    base_dim: usize,
    n_freq: usize,
    data: Vec<f64>,
}

impl ModulatedVector {
    pub fn from_parts(base_dim: usize, n_freq: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(base_dim * (2 * n_freq + 1), data.len())?;
        Ok(Self {
            base_dim,
            n_freq,
            data,
        })
    }

    pub fn zeros(base_dim: usize, n_freq: usize) -> Self {
        Self {
            base_dim,
            n_freq,
            data: vec![0.0; base_dim * (2 * n_freq + 1)],
        }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Block `b` in frequency-major order.
    pub fn block(&self, b: usize) -> &[f64] {
        &self.data[b * self.base_dim..(b + 1) * self.base_dim]
    }

    pub fn x0(&self) -> &[f64] {
        self.block(0)
    }

    pub fn cos_block(&self, n: usize) -> &[f64] {
        assert!((1..=self.n_freq).contains(&n));
        self.block(2 * n - 1)
    }

    pub fn sin_block(&self, n: usize) -> &[f64] {
        assert!((1..=self.n_freq).contains(&n));
        self.block(2 * n)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn same_layout(&self, other: &Self) -> Result<()> {
        check_dim(self.base_dim, other.base_dim)?;
        check_dim(self.n_freq, other.n_freq)
    }

    /// The vector of the same image after a global rotation by `theta`, i.e.
    /// with every dominant orientation replaced by `angle - theta`:
    ///
    /// ```text
    /// Xnc' =  Xnc cos(n theta) + Xns sin(n theta)
    /// Xns' = -Xnc sin(n theta) + Xns cos(n theta)
    /// ```
    pub fn rotate_blocks(&self, theta: f64) -> Self {
        let mut out = self.clone();
        let d = self.base_dim;
        for n in 1..=self.n_freq {
            let (s, c) = (n as f64 * theta).sin_cos();
            let (cb, sb) = ((2 * n - 1) * d, 2 * n * d);
            for j in 0..d {
                let xc = self.data[cb + j];
                let xs = self.data[sb + j];
                out.data[cb + j] = xc * c + xs * s;
                out.data[sb + j] = -xc * s + xs * c;
            }
        }
        out
    }
}

/// `v (x) a` in plain Kronecker order: `(v1 a, v2 a, ..)`.
pub fn kronecker_interleaved(v: &[f64], a: &AngleFeature) -> Vec<f64> {
    v.iter()
        .flat_map(|vi| a.values().iter().map(move |aj| vi * aj))
        .collect()
}

/// Reorders a Kronecker-ordered vector into frequency-major blocks. This is a
/// permutation, so inner products are preserved.
pub fn interleaved_to_blocks(kron: &[f64], base_dim: usize, n_freq: usize) -> Result<Vec<f64>> {
    let m = 2 * n_freq + 1;
    check_dim(base_dim * m, kron.len())?;
    let mut out = vec![0.0; kron.len()];
    for j in 0..base_dim {
        for t in 0..m {
            out[block_of_feature(t, n_freq) * base_dim + j] = kron[j * m + t];
        }
    }
    Ok(out)
}

fn modulate_add(v: &[f64], a: &[f64], n_freq: usize, acc: &mut [f64]) {
    let d = v.len();
    for (t, &coef) in a.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        let b = block_of_feature(t, n_freq);
        for (o, x) in acc[b * d..(b + 1) * d].iter_mut().zip(v) {
            *o += coef * x;
        }
    }
}

/// Modulated embedding `v (x) a` in frequency-major layout.
pub fn modulate(v: &[f64], a: &AngleFeature) -> ModulatedVector {
    let mut out = ModulatedVector::zeros(v.len(), a.n_freq());
    modulate_add(v, a.values(), a.n_freq(), &mut out.data);
    out
}

/// Unnormalised sum of modulated embeddings over the set.
///
/// Records are summed sequentially in chunks of 64; chunk sums are combined by
/// a fixed pairwise tree, so the result does not depend on thread scheduling.
pub fn aggregate_sum(
    set: &DescriptorSet,
    emb: &EmbeddingConfig,
    amap: &FourierCoefficients,
) -> Result<ModulatedVector> {
    if set.is_empty() {
        return Err(Error::contract(format!(
            "cannot encode empty descriptor set '{}'",
            set.image_id
        )));
    }
    let base_dim = emb.output_dim();
    let n_freq = amap.n_freq();
    let total = base_dim * amap.feature_dim();

    let mut partials: Vec<Vec<f64>> = set
        .records()
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; total];
            let mut phi = vec![0.0; base_dim];
            let mut alpha = vec![0.0; amap.feature_dim()];
            for r in chunk {
                emb.embed_into(&r.descriptor, &mut phi)?;
                amap.feature_into(r.angle, &mut alpha);
                modulate_add(&phi, &alpha, n_freq, &mut acc);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    while partials.len() > 1 {
        partials = partials
            .chunks_mut(2)
            .map(|pair| {
                let mut left = std::mem::take(&mut pair[0]);
                if let Some(right) = pair.get(1) {
                    left.iter_mut().zip(right).for_each(|(a, b)| *a += b);
                }
                left
            })
            .collect();
    }
    ModulatedVector::from_parts(base_dim, n_freq, partials.pop().unwrap_or_default())
}

/// Image vector `X* = beta * sum_x m(phi(x), alpha(theta_x))` with `||X*|| = 1`.
pub fn aggregate(
    set: &DescriptorSet,
    emb: &EmbeddingConfig,
    amap: &FourierCoefficients,
) -> Result<ModulatedVector> {
    let mut sum = aggregate_sum(set, emb, amap)?;
    let norm = sum.norm();
    if norm.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !norm.is_finite() {
        return Err(Error::degenerate(format!(
            "aggregated vector of '{}' has zero norm",
            set.image_id
        )));
    }
    sum.data.iter_mut().for_each(|v| *v /= norm);
    Ok(sum)
}
