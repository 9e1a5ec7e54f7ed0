use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{row_dim, sq_dist};
use crate::error::{check_dim, Error, Result};

pub const KMEANS_DEFAULT_ITERS: usize = 25;

/// `k` centroids of dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookModel {
    k: usize,
    dim: usize,
    centroids: Vec<f64>,
}

impl CodebookModel {
    /// Builds a codebook from row-major centroids. Duplicate centroids are rejected.
    pub fn new(k: usize, dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::contract("codebook needs k >= 1 and dim >= 1"));
        }
        check_dim(k * dim, centroids.len())?;
        let model = Self { k, dim, centroids };
        for i in 0..k {
            for j in i + 1..k {
                if sq_dist(model.centroid(i), model.centroid(j)) == 0.0 {
                    return Err(Error::degenerate(format!("centroids {i} and {j} coincide")));
                }
            }
        }
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest centroid and the squared distance to it.
    /// Ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, x)
    }

    /// Sum of squared distances to the nearest centroid.
    pub fn objective<R: AsRef<[f64]>>(&self, data: &[R]) -> f64 {
        data.iter().map(|x| self.nearest(x.as_ref()).1).sum()
    }
}

fn nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans_train<R: AsRef<[f64]>>(
    data: &[R],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<CodebookModel> {
    kmeans_train_traced(data, k, max_iter, seed).map(|(m, _)| m)
}

/// Like [`kmeans_train`], also returning the objective after every assignment step.
///
/// A cluster that becomes empty is re-seeded on the point farthest from its
/// current centroid.
pub fn kmeans_train_traced<R: AsRef<[f64]>>(
    data: &[R],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<(CodebookModel, Vec<f64>)> {
    let dim = row_dim(data)?;
    let n = data.len();
    if k == 0 || n < k {
        return Err(Error::contract(format!(
            "k-means needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, k, dim, &mut rng)?;

    let mut assign = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::with_capacity(max_iter + 1);
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let (a, d) = nearest(&centroids, dim, x.as_ref());
            changed |= assign[i] != a;
            assign[i] = a;
            dists[i] = d;
        }
        trace.push(dists.iter().sum());
        if !changed {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(x.as_ref()) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            let slot = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in slot.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s * inv;
                }
            } else {
                let far = (0..n)
                    .filter(|i| !taken[*i])
                    .max_by(|a, b| dists[*a].total_cmp(&dists[*b]).then(b.cmp(a)))
                    .expect("n >= k");
                taken[far] = true;
                dists[far] = 0.0;
                slot.copy_from_slice(data[far].as_ref());
                log::debug!("k-means: re-seeded empty cluster {c} on point {far}");
            }
        }
    }

    let model = CodebookModel::new(k, dim, centroids)?;
    let last = model.objective(data);
    if trace.last() != Some(&last) {
        trace.push(last);
    }
    Ok((model, trace))
}

fn plus_plus_init<R: AsRef<[f64]>>(
    data: &[R],
    k: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = data.len();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(data[first].as_ref());
    let mut d2: Vec<f64> = data
        .iter()
        .map(|x| sq_dist(x.as_ref(), &centroids[..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::degenerate(format!(
                "only {c} distinct points available for k={k}"
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, w) in d2.iter().enumerate() {
            if *w > 0.0 && target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        centroids.extend_from_slice(data[pick].as_ref());
        let new = &centroids[c * dim..];
        for (x, d) in data.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x.as_ref(), new));
        }
    }
    Ok(centroids)
}
