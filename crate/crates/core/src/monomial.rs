//! Exact feature maps for the monomial kernels `<x, y>^p`, `p = 1, 2, 3`.
//!
//! Component order within each term class is lexicographic:
//!
//! * `p = 2`: squares `x_i^2`, then `sqrt2 x_i x_j` for `i < j`.
//! * `p = 3`: cubes `x_i^3`, then `sqrt3 x_i^2 x_j` for `i != j` ordered on
//!   `(i, j)`, then `sqrt6 x_i x_j x_k` for `i < j < k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `||x|| - 1` accepted by [`phi_monomial`].
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialConfig {
    pub degree: u32,
    pub input_dim: usize,
}

impl MonomialConfig {
    pub fn new(degree: u32, input_dim: usize) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::contract(format!(
                "monomial degree must be 1, 2 or 3, got {degree}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::contract("monomial input dimension must be positive"));
        }
        Ok(Self { degree, input_dim })
    }

    pub fn output_dim(&self) -> usize {
        let d = self.input_dim;
        match self.degree {
            1 => d,
            2 => d * (d + 1) / 2,
            _ => (d * d * d + 3 * d * d + 2 * d) / 6,
        }
    }
}

pub(crate) fn check_unit(x: &[f64]) -> Result<()> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::contract(format!(
            "expected a unit-norm descriptor, got norm {norm}"
        )));
    }
    Ok(())
}

/// Writes `phi_p(x)` into `out` without checking the input norm.
pub fn phi_monomial_into(x: &[f64], degree: u32, out: &mut [f64]) {
    let d = x.len();
    match degree {
        1 => out.copy_from_slice(x),
        2 => {
            let s2 = std::f64::consts::SQRT_2;
            let mut o = 0;
            for &v in x {
                out[o] = v * v;
                o += 1;
            }
            for i in 0..d {
                let xi = s2 * x[i];
                for &xj in &x[i + 1..] {
                    out[o] = xi * xj;
                    o += 1;
                }
            }
            debug_assert_eq!(o, out.len());
        }
        3 => {
            let s3 = 3f64.sqrt();
            let s6 = 6f64.sqrt();
            let mut o = 0;
            for &v in x {
                out[o] = v * v * v;
                o += 1;
            }
            for i in 0..d {
                let xi2 = s3 * x[i] * x[i];
                for (j, &xj) in x.iter().enumerate() {
                    if j != i {
                        out[o] = xi2 * xj;
                        o += 1;
                    }
                }
            }
            for i in 0..d {
                let xi = s6 * x[i];
                for j in i + 1..d {
                    let xij = xi * x[j];
                    for &xk in &x[j + 1..] {
                        out[o] = xij * xk;
                        o += 1;
                    }
                }
            }
            debug_assert_eq!(o, out.len());
        }
        _ => unreachable!("degree validated by MonomialConfig"),
    }
}

/// Exact monomial embedding of a unit vector.
pub fn phi_monomial(x: &[f64], config: &MonomialConfig) -> Result<Vec<f64>> {
    crate::error::check_dim(config.input_dim, x.len())?;
    check_unit(x)?;
    let mut out = vec![0.0; config.output_dim()];
    phi_monomial_into(x, config.degree, &mut out);
    Ok(out)
}

/// `<phi_p(x), phi_p(y)>`, which equals `<x, y>^p` up to rounding.
pub fn monomial_kernel_check(x: &[f64], y: &[f64], degree: u32) -> Result<f64> {
    let cfg = MonomialConfig::new(degree, x.len())?;
    let a = phi_monomial(x, &cfg)?;
    let b = phi_monomial(y, &cfg)?;
    Ok(a.iter().zip(&b).map(|(u, v)| u * v).sum())
}
