use nalgebra::{DMatrix, SymmetricEigen};

use super::row_dim;
use crate::error::{check_dim, Error, Result};

/// Relative eigenvalue threshold below which a direction counts as null.
const RANK_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-8;

/// Mean, orthonormal basis (rows) and descending eigenvalues of a PCA.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `d_out x d_in`, row major.
    basis: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn new(mean: Vec<f64>, basis: Vec<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let d_in = mean.len();
        let d_out = eigenvalues.len();
        if d_in == 0 || d_out == 0 || d_out > d_in {
            return Err(Error::contract(format!(
                "invalid PCA shape: d_in={d_in}, d_out={d_out}"
            )));
        }
        check_dim(d_in * d_out, basis.len())?;
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) || eigenvalues.iter().any(|e| *e < 0.0) {
            return Err(Error::contract(
                "PCA eigenvalues must be non-negative and descending",
            ));
        }
        check_orthonormal_rows(&basis, d_in)?;
        Ok(Self {
            mean,
            basis,
            eigenvalues,
        })
    }

    /// Zero mean, identity basis.
    pub fn identity(dim: usize) -> Self {
        let mut basis = vec![0.0; dim * dim];
        for i in 0..dim {
            basis[i * dim + i] = 1.0;
        }
        Self {
            mean: vec![0.0; dim],
            basis,
            eigenvalues: vec![1.0; dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn basis_row(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.basis[i * d..(i + 1) * d]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Coordinates of `x - mean` on the first `dims` basis vectors.
    pub fn project_to(&self, x: &[f64], dims: usize) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        if dims > self.output_dim() {
            return Err(Error::contract(format!(
                "requested {dims} PCA components, model has {}",
                self.output_dim()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..dims)
            .map(|i| dot(self.basis_row(i), &centered))
            .collect())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.project_to(x, self.output_dim())
    }

    /// `basis^T y + mean`.
    pub fn back_project(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.output_dim(), y.len())?;
        let mut out = self.mean.clone();
        for (i, c) in y.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis_row(i)) {
                *o += c * b;
            }
        }
        Ok(out)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_orthonormal_rows(rows: &[f64], dim: usize) -> Result<()> {
    let n = rows.len() / dim;
    for i in 0..n {
        let ri = &rows[i * dim..(i + 1) * dim];
        for j in i..n {
            let rj = &rows[j * dim..(j + 1) * dim];
            let want = if i == j { 1.0 } else { 0.0 };
            let got = dot(ri, rj);
            if (got - want).abs() > ORTHO_TOL {
                return Err(Error::contract(format!(
                    "basis rows {i},{j} not orthonormal: inner product {got}"
                )));
            }
        }
    }
    Ok(())
}

/// Principal directions of a centered sample.
#[derive(Clone, Debug)]
pub struct PrincipalAxes {
    pub mean: Vec<f64>,
    /// `rank x dim`, row major, orthonormal rows.
    pub axes: Vec<f64>,
    /// Covariance eigenvalues, descending, all above the null threshold.
    pub eigenvalues: Vec<f64>,
}

impl PrincipalAxes {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Mean-centered eigendecomposition of the sample covariance, keeping at most
/// `max_rank` non-null directions.
///
/// Uses the `d x d` covariance when `n >= d`, and the `n x n` Gram matrix
/// otherwise; in both cases only directions spanned by the sample are returned.
pub fn principal_axes<R: AsRef<[f64]>>(data: &[R], max_rank: usize) -> Result<PrincipalAxes> {
    let d = row_dim(data)?;
    let n = data.len();
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let denom = (n.max(2) - 1) as f64;
    let centered = DMatrix::from_fn(n, d, |i, j| data[i].as_ref()[j] - mean[j]);

    let (axes, eigenvalues) = if n >= d {
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let order = descending_order(eig.eigenvalues.as_slice());
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut axes = Vec::new();
        let mut values = Vec::new();
        for &c in order.iter().take(max_rank) {
            let lambda = eig.eigenvalues[c];
            if !(lambda > RANK_TOL * top && lambda > 0.0) {
                break;
            }
            let col = eig.eigenvectors.column(c);
            axes.extend(col.iter().copied());
            values.push(lambda);
        }
        (axes, values)
    } else {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        let order = descending_order(eig.eigenvalues.as_slice());
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut axes = Vec::new();
        let mut values = Vec::new();
        for &c in order.iter().take(max_rank) {
            let lambda = eig.eigenvalues[c];
            if !(lambda > RANK_TOL * top && lambda > 0.0) {
                break;
            }
            let u = centered.transpose() * eig.eigenvectors.column(c) / lambda.sqrt();
            axes.extend(u.iter().copied());
            values.push(lambda / denom);
        }
        reorthonormalize(&mut axes, d);
        (axes, values)
    };

    let mut axes = axes;
    fix_signs(&mut axes, d);
    Ok(PrincipalAxes {
        mean,
        axes,
        eigenvalues,
    })
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Modified Gram-Schmidt pass over the rows.
fn reorthonormalize(rows: &mut [f64], dim: usize) {
    let n = rows.len() / dim;
    for i in 0..n {
        for j in 0..i {
            let (head, tail) = rows.split_at_mut(i * dim);
            let rj = &head[j * dim..(j + 1) * dim];
            let ri = &mut tail[..dim];
            let p = dot(ri, rj);
            ri.iter_mut().zip(rj).for_each(|(a, b)| *a -= p * b);
        }
        let ri = &mut rows[i * dim..(i + 1) * dim];
        let norm = dot(ri, ri).sqrt();
        ri.iter_mut().for_each(|a| *a /= norm);
    }
}

/// Makes the largest-magnitude entry of every row positive.
fn fix_signs(rows: &mut [f64], dim: usize) {
    for row in rows.chunks_mut(dim) {
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Trains a PCA keeping the `out_dim` leading components.
pub fn pca_train<R: AsRef<[f64]>>(data: &[R], out_dim: usize) -> Result<PcaModel> {
    let d = row_dim(data)?;
    if out_dim == 0 || out_dim > d {
        return Err(Error::contract(format!(
            "PCA output dimension must be in 1..={d}, got {out_dim}"
        )));
    }
    if data.len() <= out_dim {
        return Err(Error::contract(format!(
            "PCA needs more than {out_dim} samples, got {}",
            data.len()
        )));
    }
    let axes = principal_axes(data, out_dim)?;
    if axes.rank() < out_dim {
        return Err(Error::degenerate(format!(
            "training data has rank {}, cannot keep {out_dim} components",
            axes.rank()
        )));
    }
    PcaModel::new(axes.mean, axes.axes, axes.eigenvalues)
}
