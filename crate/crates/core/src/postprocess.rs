//! Non-linear post-processing of image vectors: power-law normalisation, its
//! modulus-based variant that commutes with block rotations, RN (PCA rotation
//! followed by a second power law) and truncation.

use crate::embed::l2_normalize;
use crate::error::{check_dim, Error, Result};
use crate::modulate::ModulatedVector;
use crate::training::{check_orthonormal_rows, principal_axes};

/// Power-law exponent for VLAD and Fisher vectors.
pub const POWER_LAW_CODEBOOK: f64 = 0.4;
/// Power-law exponent for monomial embeddings.
pub const POWER_LAW_MONOMIAL: f64 = 0.2;
/// Exponent of the second power law applied after the RN rotation.
pub const RN_EXPONENT: f64 = 0.5;

fn check_exponent(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::contract(format!(
            "power-law exponent must be in (0, 1], got {a}"
        )));
    }
    Ok(())
}

/// `z -> sign(z) |z|^a` component-wise, then L2 normalisation.
pub fn power_law(v: &[f64], a: f64) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    power_law_in_place(&mut out, a)?;
    Ok(out)
}

pub fn power_law_in_place(v: &mut [f64], a: f64) -> Result<()> {
    check_exponent(a)?;
    if a != 1.0 {
        v.iter_mut().for_each(|z| *z = z.signum() * z.abs().powf(a));
    }
    l2_normalize(v);
    Ok(())
}

/// Power law acting on the modulus of each `(Xnc[j], Xns[j])` pair.
///
/// `X0` receives the plain signed power law. Each cosine/sine pair is divided
/// by `modulus^(1 - a)`, which keeps its phase; zero pairs stay zero. The
/// result is L2 normalised.
pub fn adapted_power_law(x: &ModulatedVector, a: f64) -> Result<ModulatedVector> {
    check_exponent(a)?;
    let d = x.base_dim();
    let mut out = x.clone();
    let data = out.as_mut_slice();
    for z in &mut data[..d] {
        *z = z.signum() * z.abs().powf(a);
    }
    for n in 1..=x.n_freq() {
        let (cb, sb) = ((2 * n - 1) * d, 2 * n * d);
        for j in 0..d {
            let (c, s) = (data[cb + j], data[sb + j]);
            let modulus = c.hypot(s);
            if modulus > 0.0 {
                let scale = modulus.powf(a - 1.0);
                data[cb + j] = c * scale;
                data[sb + j] = s * scale;
            }
        }
    }
    l2_normalize(data);
    Ok(out)
}

/// Keeps the first `d_out` components and re-normalises.
pub fn truncate_l2(v: &[f64], d_out: usize) -> Result<Vec<f64>> {
    if d_out == 0 {
        return Err(Error::contract("truncation dimension must be positive"));
    }
    if d_out > v.len() {
        return Err(Error::contract(format!(
            "cannot truncate a {}-dim vector to {d_out} components",
            v.len()
        )));
    }
    let mut out = v[..d_out].to_vec();
    l2_normalize(&mut out);
    Ok(out)
}

/// Rotation and Normalisation.
///
/// The rotation is an orthonormal `dim x dim` matrix whose first `rank` rows
/// are the principal directions of the training vectors (descending variance).
/// The remaining rows complete them to an orthonormal basis; they are applied
/// implicitly through Householder reflections, so only `rank x dim` values are
/// stored. Vectors are centred on the training mean before rotation.
#[derive(Clone, Debug)]
pub struct RnModel {
    dim: usize,
    mean: Vec<f64>,
    axes: Vec<f64>,
    eigenvalues: Vec<f64>,
    reflectors: Vec<Vec<f64>>,
    exponent: f64,
    whiten: bool,
}

impl PartialEq for RnModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.mean == other.mean
            && self.axes == other.axes
            && self.eigenvalues == other.eigenvalues
            && self.exponent == other.exponent
            && self.whiten == other.whiten
    }
}

impl RnModel {
    pub fn from_parts(
        mean: Vec<f64>,
        axes: Vec<f64>,
        eigenvalues: Vec<f64>,
        exponent: f64,
    ) -> Result<Self> {
        check_exponent(exponent)?;
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::contract("RN model needs a positive dimension"));
        }
        check_dim(eigenvalues.len() * dim, axes.len())?;
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) || eigenvalues.iter().any(|e| *e < 0.0) {
            return Err(Error::contract(
                "RN eigenvalues must be non-negative and descending",
            ));
        }
        check_orthonormal_rows(&axes, dim)?;
        let reflectors = householder_completion(&axes, dim);
        Ok(Self {
            dim,
            mean,
            axes,
            eigenvalues,
            reflectors,
            exponent,
            whiten: false,
        })
    }

    /// Identity rotation, zero mean.
    pub fn identity(dim: usize, exponent: f64) -> Result<Self> {
        Self::from_parts(vec![0.0; dim], Vec::new(), Vec::new(), exponent)
    }

    /// Divides the principal coordinates by the square root of their
    /// eigenvalue before the second power law. Off by default.
    pub fn with_whitening(mut self, whiten: bool) -> Self {
        self.whiten = whiten;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn axes(&self) -> &[f64] {
        &self.axes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn whitening(&self) -> bool {
        self.whiten
    }

    /// Applies the orthonormal rotation to `v - mean`.
    pub fn rotate(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let r = self.rank();
        let mut out = vec![0.0; self.dim];
        for (i, o) in out.iter_mut().take(r).enumerate() {
            let axis = &self.axes[i * self.dim..(i + 1) * self.dim];
            *o = axis.iter().zip(&centered).map(|(a, b)| a * b).sum();
        }
        if r < self.dim {
            let mut z = centered;
            for w in &self.reflectors {
                let p: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
                z.iter_mut().zip(w).for_each(|(zi, wi)| *zi -= 2.0 * p * wi);
            }
            out[r..].copy_from_slice(&z[r..]);
        }
        Ok(out)
    }

    /// Rotation, optional whitening, then the second power law.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.rotate(v)?;
        if self.whiten {
            for (yi, l) in y.iter_mut().zip(&self.eigenvalues) {
                *yi /= (l + 1e-12).sqrt();
            }
        }
        power_law_in_place(&mut y, self.exponent)?;
        Ok(y)
    }
}

/// Householder vectors `w_i` such that `H_r .. H_1 A = [±I; 0]` for
/// `A = axes^T`; the trailing rows of `H_r .. H_1` complete the axes.
fn householder_completion(axes: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let r = axes.len() / dim;
    // Columns of A, i.e. the axes themselves, updated in place.
    let mut cols: Vec<Vec<f64>> = axes.chunks(dim).map(|c| c.to_vec()).collect();
    let mut reflectors = Vec::with_capacity(r);
    for i in 0..r {
        let x = &cols[i];
        let norm: f64 = x[i..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut w = vec![0.0; dim];
        w[i..].copy_from_slice(&x[i..]);
        let alpha = if x[i] >= 0.0 { -norm } else { norm };
        w[i] -= alpha;
        let wn: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if wn <= f64::EPSILON * norm.max(1.0) {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= wn);
        for col in cols.iter_mut().skip(i) {
            let p: f64 = w.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            col.iter_mut()
                .zip(&w)
                .for_each(|(c, wi)| *c -= 2.0 * p * wi);
        }
        reflectors.push(w);
    }
    reflectors
}

/// Learns the RN rotation from held-out image vectors.
///
/// With fewer samples than dimensions the learned rotation only covers the
/// sample-spanned subspace; a warning is logged.
pub fn rn_train<R: AsRef<[f64]>>(vectors: &[R], exponent: f64) -> Result<RnModel> {
    check_exponent(exponent)?;
    let first = vectors
        .first()
        .ok_or_else(|| Error::contract("RN training needs at least one vector"))?;
    let dim = first.as_ref().len();
    if vectors.len() <= dim {
        log::warn!(
            "RN trained on {} vectors of dimension {dim}: rotation restricted to the sample span",
            vectors.len()
        );
    }
    let axes = principal_axes(vectors, dim)?;
    RnModel::from_parts(axes.mean, axes.axes, axes.eigenvalues, exponent)
}

pub fn rn_apply(v: &[f64], model: &RnModel) -> Result<Vec<f64>> {
    model.apply(v)
}
