//! Brute-force match kernels, quadratic in the set sizes. Reference values for
//! tests; not meant for real workloads.

use crate::angle_map::FourierCoefficients;
use crate::embed::{embed_descriptor, DescriptorSet, EmbeddingConfig};
use crate::error::{Error, Result};

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn double_sum(xs: &[(Vec<f64>, f64)], ys: &[(Vec<f64>, f64)], amap: &FourierCoefficients) -> f64 {
    let mut s = 0.0;
    for (px, tx) in xs {
        for (py, ty) in ys {
            s += naive_dot(px, py) * amap.eval(tx - ty);
        }
    }
    s
}

fn embedded(set: &DescriptorSet, emb: &EmbeddingConfig) -> Result<Vec<(Vec<f64>, f64)>> {
    set.records()
        .iter()
        .map(|r| Ok((embed_descriptor(&r.descriptor, emb)?, r.angle)))
        .collect()
}

fn normalised(kxy: f64, kxx: f64, kyy: f64) -> Result<f64> {
    if !(kxx > 0.0 && kyy > 0.0) {
        return Err(Error::degenerate("self match kernel is not positive"));
    }
    Ok(kxy / (kxx.sqrt() * kyy.sqrt()))
}

/// `beta(X) beta(Y) sum_x sum_y <phi(x), phi(y)> kbar(theta_x - theta_y)`,
/// with `beta(X) = K(X, X)^(-1/2)`.
pub fn brute_match_kernel(
    x: &DescriptorSet,
    y: &DescriptorSet,
    emb: &EmbeddingConfig,
    amap: &FourierCoefficients,
) -> Result<f64> {
    let ex = embedded(x, emb)?;
    let ey = embedded(y, emb)?;
    normalised(
        double_sum(&ex, &ey, amap),
        double_sum(&ex, &ex, amap),
        double_sum(&ey, &ey, amap),
    )
}

/// Normalised double sum of `<x, y>^p` over raw descriptors.
pub fn brute_monomial_kernel<R: AsRef<[f64]>>(x: &[R], y: &[R], p: u32) -> Result<f64> {
    let k = |a: &[R], b: &[R]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += naive_dot(u.as_ref(), v.as_ref()).powi(p as i32);
            }
        }
        s
    };
    normalised(k(x, y), k(x, x), k(y, y))
}
