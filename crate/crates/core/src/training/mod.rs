//! Auxiliary models learned on a training corpus: PCA, k-means codebooks and
//! diagonal Gaussian mixtures.
//!
//! Training is single threaded and fully determined by `(data, k, seed)`.

mod gmm;
mod kmeans;
mod pca;

pub use gmm::{gmm_train, gmm_train_traced, GmmModel, GMM_DEFAULT_ITERS};
pub use kmeans::{kmeans_train, kmeans_train_traced, CodebookModel, KMEANS_DEFAULT_ITERS};
pub(crate) use pca::check_orthonormal_rows;
pub use pca::{pca_train, principal_axes, PcaModel, PrincipalAxes};

use crate::error::{Error, Result};

/// Checks that `data` is a non-empty set of equal-length finite rows and
/// returns the row length.
pub(crate) fn row_dim<R: AsRef<[f64]>>(data: &[R]) -> Result<usize> {
    let first = data
        .first()
        .ok_or_else(|| Error::contract("training data is empty"))?;
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::contract("training rows have zero dimension"));
    }
    for (i, row) in data.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "training row {i} has non-finite values"
            )));
        }
    }
    Ok(d)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
