use std::f64::consts::PI;

use super::{kmeans_train, row_dim, KMEANS_DEFAULT_ITERS};
use crate::error::{check_dim, Error, Result};

pub const GMM_DEFAULT_ITERS: usize = 100;

/// Per-dimension variance floor relative to the global data variance.
const VARIANCE_FLOOR: f64 = 1e-4;
const ABS_VARIANCE_FLOOR: f64 = 1e-12;
const WEIGHT_FLOOR: f64 = 1e-12;

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GmmModel {
    pub fn new(
        k: usize,
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::contract("GMM needs k >= 1 and dim >= 1"));
        }
        check_dim(k, weights.len())?;
        check_dim(k * dim, means.len())?;
        check_dim(k * dim, variances.len())?;
        if weights
            .iter()
            .any(|w| w.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::contract("GMM weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::contract(format!(
                "GMM weights sum to {total}, not 1"
            )));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::contract("GMM variances must be positive and finite"));
        }
        Ok(Self {
            k,
            dim,
            weights,
            means,
            variances,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, g: usize) -> &[f64] {
        &self.means[g * self.dim..(g + 1) * self.dim]
    }

    pub fn variance(&self, g: usize) -> &[f64] {
        &self.variances[g * self.dim..(g + 1) * self.dim]
    }

    /// `log(w_g N(x; mu_g, diag sigma_g^2))` for every component.
    pub fn log_joint(&self, x: &[f64], out: &mut [f64]) {
        let log_2pi = (2.0 * PI).ln();
        for g in 0..self.k {
            let mut acc = self.weights[g].ln() - 0.5 * self.dim as f64 * log_2pi;
            for ((xi, m), v) in x.iter().zip(self.mean(g)).zip(self.variance(g)) {
                let r = xi - m;
                acc -= 0.5 * (v.ln() + r * r / v);
            }
            out[g] = acc;
        }
    }

    /// Posterior membership probabilities of `x`; returns `log p(x)`.
    pub fn posteriors_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.log_joint(x, out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        out.iter_mut().for_each(|v| *v /= sum);
        max + sum.ln()
    }

    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut out = vec![0.0; self.k];
        self.posteriors_into(x, &mut out);
        Ok(out)
    }

    /// Total log-likelihood of a sample.
    pub fn log_likelihood<R: AsRef<[f64]>>(&self, data: &[R]) -> f64 {
        let mut buf = vec![0.0; self.k];
        data.iter()
            .map(|x| self.posteriors_into(x.as_ref(), &mut buf))
            .sum()
    }
}

/// EM training of a diagonal GMM initialised from k-means.
pub fn gmm_train<R: AsRef<[f64]>>(
    data: &[R],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<GmmModel> {
    gmm_train_traced(data, k, max_iter, seed).map(|(m, _)| m)
}

/// Like [`gmm_train`], also returning the log-likelihood of every iterate.
///
/// Variances are floored at `1e-4` times the global per-dimension variance.
pub fn gmm_train_traced<R: AsRef<[f64]>>(
    data: &[R],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<(GmmModel, Vec<f64>)> {
    let dim = row_dim(data)?;
    let n = data.len();
    if k == 0 || n < 10 * k {
        return Err(Error::contract(format!(
            "GMM training needs at least 10 samples per component, got n={n}, k={k}"
        )));
    }

    let mut global_mean = vec![0.0; dim];
    for x in data {
        for (m, v) in global_mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut floor = vec![0.0; dim];
    for x in data {
        for ((f, v), m) in floor.iter_mut().zip(x.as_ref()).zip(&global_mean) {
            *f += (v - m) * (v - m);
        }
    }
    floor
        .iter_mut()
        .for_each(|f| *f = (VARIANCE_FLOOR * *f / n as f64).max(ABS_VARIANCE_FLOOR));

    // Initialisation from hard k-means assignments.
    let codebook = kmeans_train(data, k, KMEANS_DEFAULT_ITERS, seed)?;
    let mut resp = vec![0.0; n * k];
    for (i, x) in data.iter().enumerate() {
        resp[i * k + codebook.nearest(x.as_ref()).0] = 1.0;
    }
    let mut model = m_step(data, &resp, k, dim, &floor);

    let mut trace = Vec::with_capacity(max_iter + 1);
    let mut buf = vec![0.0; k];
    for _ in 0..max_iter {
        let mut ll = 0.0;
        for (i, x) in data.iter().enumerate() {
            ll += model.posteriors_into(x.as_ref(), &mut buf);
            resp[i * k..(i + 1) * k].copy_from_slice(&buf);
        }
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| ll - prev <= 1e-12 * ll.abs().max(1.0));
        trace.push(ll);
        if converged {
            break;
        }
        model = m_step(data, &resp, k, dim, &floor);
    }
    let final_ll = model.log_likelihood(data);
    if trace.last() != Some(&final_ll) {
        trace.push(final_ll);
    }
    Ok((model, trace))
}

fn m_step<R: AsRef<[f64]>>(
    data: &[R],
    resp: &[f64],
    k: usize,
    dim: usize,
    floor: &[f64],
) -> GmmModel {
    let n = data.len();
    let mut mass = vec![0.0; k];
    let mut means = vec![0.0; k * dim];
    for (i, x) in data.iter().enumerate() {
        let x = x.as_ref();
        for g in 0..k {
            let r = resp[i * k + g];
            if r == 0.0 {
                continue;
            }
            mass[g] += r;
            for (m, v) in means[g * dim..(g + 1) * dim].iter_mut().zip(x) {
                *m += r * v;
            }
        }
    }
    for g in 0..k {
        if mass[g] > 0.0 {
            means[g * dim..(g + 1) * dim]
                .iter_mut()
                .for_each(|m| *m /= mass[g]);
        }
    }
    let mut variances = vec![0.0; k * dim];
    for (i, x) in data.iter().enumerate() {
        let x = x.as_ref();
        for g in 0..k {
            let r = resp[i * k + g];
            if r == 0.0 {
                continue;
            }
            let mean = &means[g * dim..(g + 1) * dim];
            for ((s, v), m) in variances[g * dim..(g + 1) * dim]
                .iter_mut()
                .zip(x)
                .zip(mean)
            {
                *s += r * (v - m) * (v - m);
            }
        }
    }
    for g in 0..k {
        for j in 0..dim {
            let v = &mut variances[g * dim + j];
            *v = if mass[g] > 0.0 { *v / mass[g] } else { 0.0 };
            *v = v.max(floor[j]);
        }
    }
    let mut weights: Vec<f64> = mass
        .iter()
        .map(|m| (m / n as f64).max(WEIGHT_FLOOR))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel {
        k,
        dim,
        weights,
        means,
        variances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_gaussians(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = Vec::new();
        for i in 0..2000 {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            data.push(vec![
                c + noise.sample(&mut rng),
                noise.sample(&mut rng) * 0.5,
            ]);
        }
        data
    }

    #[test]
    fn recovers_two_components() {
        let data = two_gaussians(8);
        let model = gmm_train(&data, 2, 100, 1).unwrap();
        let mut xs: Vec<f64> = (0..2).map(|g| model.mean(g)[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!(
            (xs[0] + 5.0).abs() < 0.1 && (xs[1] - 5.0).abs() < 0.1,
            "{xs:?}"
        );
        for w in model.weights() {
            assert!((w - 0.5).abs() < 0.05);
        }
        assert!((model.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_component_is_moments() {
        let data = two_gaussians(9);
        let model = gmm_train(&data, 1, 10, 0).unwrap();
        let n = data.len() as f64;
        for j in 0..2 {
            let m = data.iter().map(|r| r[j]).sum::<f64>() / n;
            let v = data.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            assert!((model.mean(0)[j] - m).abs() < 1e-10);
            assert!((model.variance(0)[j] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn log_likelihood_monotone() {
        for seed in 0..4 {
            let data = two_gaussians(seed);
            let (_, trace) = gmm_train_traced(&data, 4, 50, seed).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{trace:?}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let data = two_gaussians(3);
        assert_eq!(
            gmm_train(&data, 3, 30, 5).unwrap(),
            gmm_train(&data, 3, 30, 5).unwrap()
        );
    }

    #[test]
    fn variance_floor_applies() {
        // A constant coordinate collapses without the floor.
        let mut data = two_gaussians(4);
        for (i, r) in data.iter_mut().enumerate() {
            r[1] = if i < 3 { 1.0 } else { 0.0 };
        }
        let model = gmm_train(&data, 2, 50, 0).unwrap();
        assert!(model.variances().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn requires_enough_samples() {
        let data = vec![vec![0.0, 1.0]; 15];
        assert!(matches!(
            gmm_train(&data, 2, 10, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn posteriors_sum_to_one() {
        let data = two_gaussians(1);
        let model = gmm_train(&data, 3, 20, 2).unwrap();
        for x in data.iter().take(50) {
            let p = model.posteriors(x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
