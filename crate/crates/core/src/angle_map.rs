//! Explicit feature maps for shift-invariant kernels on angles.
//!
//! The Von Mises-derived kernel
//!
//! ```text
//! k_vm(d) = (exp(kappa cos d) - exp(-kappa)) / (2 sinh kappa)
//! ```
//!
//! has range `[0, 1]` and vanishes at `d = pi`. Its Fourier series is truncated
//! to `N` frequencies, `k_bar(d) = sum_n gamma_n cos(n d)`, and the feature map
//!
//! ```text
//! alpha(theta) = (sqrt g0, sqrt g1 cos theta, .., sqrt gN cos N theta,
//!                          sqrt g1 sin theta, .., sqrt gN sin N theta)
//! ```
//!
//! reproduces `k_bar` exactly through inner products. The cosine-power family
//! `cos(d/2)^P` has a finite series and is therefore represented without
//! truncation error.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Bessel order accepted by [`bessel_i`].
pub const BESSEL_MAX_ORDER: u32 = 64;
/// Largest Bessel argument accepted by [`bessel_i`].
pub const BESSEL_MAX_ARG: f64 = 100.0;

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 1000;

/// Modified Bessel function of the first kind `I_n(x)`.
///
/// Evaluated with the ascending power series
/// `sum_k (x/2)^(2k+n) / (k! (k+n)!)`. All terms are positive so the sum has
/// no cancellation; summation stops once a term drops below `1e-16` of the
/// running total. Supported range is `n <= 64`, `0 <= x <= 100`.
pub fn bessel_i(n: u32, x: f64) -> Result<f64> {
    if n > BESSEL_MAX_ORDER {
        return Err(Error::Domain(format!(
            "bessel order {n} exceeds supported maximum {BESSEL_MAX_ORDER}"
        )));
    }
    if !(0.0..=BESSEL_MAX_ARG).contains(&x) {
        return Err(Error::Domain(format!(
            "bessel argument {x} outside supported range [0, {BESSEL_MAX_ARG}]"
        )));
    }
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }

    let half = 0.5 * x;
    // (x/2)^n / n!, built incrementally to stay in range for large n.
    let mut term = 1.0;
    for j in 1..=n {
        term *= half / j as f64;
    }
    let quarter_sq = half * half;
    let mut sum = term;
    for k in 1..SERIES_MAX_TERMS {
        term *= quarter_sq / (k as f64 * (k as f64 + n as f64));
        sum += term;
        if term <= SERIES_REL_TOL * sum {
            break;
        }
    }
    Ok(sum)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// The shifted and scaled Von Mises kernel, range `[0, 1]`.
///
/// Written as `(exp(kappa (cos d - 1)) - exp(-2 kappa)) / (1 - exp(-2 kappa))`,
/// which is algebraically identical to the textbook form and does not overflow
/// for large `kappa`.
pub fn vm_kernel(delta: f64, kappa: f64) -> f64 {
    debug_assert!(kappa > 0.0);
    let c = wrap_angle(delta).cos();
    let floor = (-2.0 * kappa).exp();
    ((kappa * (c - 1.0)).exp() - floor) / (1.0 - floor)
}

/// `cos(d/2)^P`.
pub fn cosine_power_kernel(delta: f64, power: u32) -> f64 {
    (0.5 * wrap_angle(delta)).cos().powi(power as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleFamily {
    VonMises,
    CosinePower,
}

/// Parameters of the angle kernel and its truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleMapConfig {
    pub family: AngleFamily,
    /// Von Mises concentration; ignored by the cosine-power family.
    pub kappa: f64,
    /// Number of retained frequencies. Forced to `power / 2` for cosine-power.
    pub n_freq: usize,
    /// Even exponent of the cosine-power family.
    pub power: u32,
}

impl Default for AngleMapConfig {
    fn default() -> Self {
        Self {
            family: AngleFamily::VonMises,
            kappa: 8.0,
            n_freq: 3,
            power: 0,
        }
    }
}

impl AngleMapConfig {
    pub fn von_mises(kappa: f64, n_freq: usize) -> Result<Self> {
        let cfg = Self {
            family: AngleFamily::VonMises,
            kappa,
            n_freq,
            power: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cosine_power(power: u32) -> Result<Self> {
        let cfg = Self {
            family: AngleFamily::CosinePower,
            kappa: 0.0,
            n_freq: (power / 2) as usize,
            power,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            AngleFamily::VonMises => {
                if !(self.kappa > 0.0 && self.kappa.is_finite()) {
                    return Err(Error::contract(format!(
                        "von Mises kappa must be positive, got {}",
                        self.kappa
                    )));
                }
                if self.n_freq > BESSEL_MAX_ORDER as usize {
                    return Err(Error::Domain(format!(
                        "n_freq {} exceeds supported maximum {BESSEL_MAX_ORDER}",
                        self.n_freq
                    )));
                }
            }
            AngleFamily::CosinePower => {
                if self.power < 2 || !self.power.is_multiple_of(2) {
                    return Err(Error::contract(format!(
                        "cosine power must be even and >= 2, got {}",
                        self.power
                    )));
                }
                if self.n_freq != (self.power / 2) as usize {
                    return Err(Error::contract(format!(
                        "cosine power {} requires n_freq = {}, got {}",
                        self.power,
                        self.power / 2,
                        self.n_freq
                    )));
                }
            }
        }
        Ok(())
    }

    /// Output length `2N + 1` of the angle feature map.
    pub fn feature_dim(&self) -> usize {
        2 * self.n_freq + 1
    }

    /// The untruncated target kernel.
    pub fn target_kernel(&self, delta: f64) -> f64 {
        match self.family {
            AngleFamily::VonMises => vm_kernel(delta, self.kappa),
            AngleFamily::CosinePower => cosine_power_kernel(delta, self.power),
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Computes the series coefficients `gamma_0 .. gamma_N` for a configuration.
pub fn fourier_coeffs(config: &AngleMapConfig) -> Result<FourierCoefficients> {
    config.validate()?;
    let gamma = match config.family {
        AngleFamily::VonMises => {
            let k = config.kappa;
            if k > BESSEL_MAX_ARG {
                return Err(Error::Domain(format!(
                    "kappa {k} exceeds supported maximum {BESSEL_MAX_ARG}"
                )));
            }
            let sinh = k.sinh();
            let mut gamma = Vec::with_capacity(config.n_freq + 1);
            gamma.push((bessel_i(0, k)? - (-k).exp()) / (2.0 * sinh));
            for n in 1..=config.n_freq {
                gamma.push(bessel_i(n as u32, k)? / sinh);
            }
            gamma
        }
        AngleFamily::CosinePower => {
            let p = config.power;
            let half = p / 2;
            let scale = 2f64.powi(-(p as i32));
            let mut gamma = Vec::with_capacity(half as usize + 1);
            gamma.push(scale * binomial(p, half));
            for q in 1..=half {
                gamma.push(2.0 * scale * binomial(p, half - q));
            }
            gamma
        }
    };
    FourierCoefficients::from_gamma(gamma)
}

/// Non-negative cosine-series coefficients of an angle kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficients {
    gamma: Vec<f64>,
    sqrt_gamma: Vec<f64>,
}

impl FourierCoefficients {
    pub fn from_gamma(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::contract("at least gamma_0 is required"));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(Error::contract(format!(
                "series coefficients must be finite and non-negative, got {g}"
            )));
        }
        let sqrt_gamma = gamma.iter().map(|g| g.sqrt()).collect();
        Ok(Self { gamma, sqrt_gamma })
    }

    /// Constant kernel `k(d) = 1`: a single coefficient `gamma_0 = 1`.
    pub fn constant() -> Self {
        Self {
            gamma: vec![1.0],
            sqrt_gamma: vec![1.0],
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn n_freq(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.n_freq() + 1
    }

    /// `k_bar(0)`, which is also the squared norm of every angle feature.
    pub fn peak(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// Truncated kernel `sum_n gamma_n cos(n delta)`.
    pub fn eval(&self, delta: f64) -> f64 {
        let d = wrap_angle(delta);
        self.gamma
            .iter()
            .enumerate()
            .map(|(n, g)| g * (n as f64 * d).cos())
            .sum()
    }

    /// Writes `alpha(theta)` into `out` (length `2N + 1`).
    pub fn feature_into(&self, theta: f64, out: &mut [f64]) {
        let n_freq = self.n_freq();
        debug_assert_eq!(out.len(), 2 * n_freq + 1);
        let t = wrap_angle(theta);
        out[0] = self.sqrt_gamma[0];
        for n in 1..=n_freq {
            let (s, c) = (n as f64 * t).sin_cos();
            out[n] = self.sqrt_gamma[n] * c;
            out[n_freq + n] = self.sqrt_gamma[n] * s;
        }
    }

    pub fn feature(&self, theta: f64) -> AngleFeature {
        let mut values = vec![0.0; self.feature_dim()];
        self.feature_into(theta, &mut values);
        AngleFeature { values }
    }
}

/// Free-function form of [`FourierCoefficients::eval`].
pub fn truncated_kernel(delta: f64, coeffs: &FourierCoefficients) -> f64 {
    coeffs.eval(delta)
}

/// Free-function form of [`FourierCoefficients::feature`].
pub fn angle_feature(theta: f64, coeffs: &FourierCoefficients) -> AngleFeature {
    coeffs.feature(theta)
}

/// `alpha(theta)` in the layout `[sqrt g0, cos terms.., sin terms..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleFeature {
    values: Vec<f64>,
}

impl AngleFeature {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_freq(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn dot(&self, other: &AngleFeature) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: I_n(x) = 1/pi int_0^pi exp(x cos t) cos(n t) dt,
    // trapezoid rule (spectrally accurate for periodic integrands).
    fn bessel_integral(n: u32, x: f64) -> f64 {
        let m = 4096;
        let h = PI / m as f64;
        let f = |t: f64| (x * t.cos()).exp() * (n as f64 * t).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn bessel_trivial_values() {
        assert_eq!(bessel_i(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_i(7, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn bessel_i0_of_8() {
        // mpmath, 40 digits: 427.56411572180478517...
        let v = bessel_i(0, 8.0).unwrap();
        assert!(rel(v, 427.564_115_721_804_8) < 1e-14, "{v}");
    }

    #[test]
    fn bessel_matches_integral_oracle() {
        for &x in &[0.5, 2.0, 4.0, 8.0, 32.0, 60.0] {
            for n in [0u32, 1, 2, 5, 10] {
                let v = bessel_i(n, x).unwrap();
                let o = bessel_integral(n, x);
                // The quadrature cancels terms of size I_0(x).
                let scale = bessel_integral(0, x);
                assert!((v - o).abs() < 1e-13 * scale, "n={n} x={x}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn bessel_reference_values() {
        // mpmath besseli
        let cases = [
            (5, 2.0, 0.009_825_679_323_131_702),
            (10, 2.0, 3.016_963_879_350_684_5e-7),
            (10, 32.0, 1_158_284_969_061.844_2),
            (64, 100.0, 2.348_866_901_664_061_3e33),
            (0, 100.0, 1.073_751_707_131_073_8e42),
            (10, 0.5, 2.643_041_925_881_279_4e-13),
        ];
        for (n, x, want) in cases {
            let v = bessel_i(n, x).unwrap();
            assert!(rel(v, want) < 1e-12, "I_{n}({x}) = {v}, want {want}");
        }
    }

    #[test]
    fn bessel_out_of_range() {
        assert!(matches!(bessel_i(65, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0, 100.5), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn bessel_recurrence_residual() {
        for &k in &[2.0, 4.0, 8.0, 32.0] {
            for n in 1..=10u32 {
                let lo = bessel_i(n - 1, k).unwrap();
                let mid = bessel_i(n, k).unwrap();
                let hi = bessel_i(n + 1, k).unwrap();
                let r = (hi - lo + 2.0 * n as f64 / k * mid).abs() / lo;
                assert!(r < 1e-10, "kappa={k} n={n}: {r}");
            }
        }
    }

    #[test]
    fn vm_kernel_values() {
        assert!((vm_kernel(0.0, 8.0) - 1.0).abs() < 1e-15);
        assert!(vm_kernel(PI, 8.0).abs() < 1e-15);
        let direct = (1.0 - (-8f64).exp()) / (2.0 * 8f64.sinh());
        assert!((vm_kernel(PI / 2.0, 8.0) - direct).abs() < 1e-16);
        assert!((direct - 3.353_501_304_664_781e-4).abs() < 1e-15);
        // symmetric and periodic
        assert!((vm_kernel(0.7, 4.0) - vm_kernel(-0.7, 4.0)).abs() < 1e-15);
        assert!((vm_kernel(0.7, 4.0) - vm_kernel(0.7 + 4.0 * PI, 4.0)).abs() < 1e-12);
    }

    #[test]
    fn von_mises_coefficients() {
        let c = fourier_coeffs(&AngleMapConfig::von_mises(8.0, 3).unwrap()).unwrap();
        let want = [
            0.143_431_685_462_785_37,
            0.268_285_016_776_897_6,
            0.219_792_341_801_721_1,
            0.158_388_845_876_037_02,
        ];
        for (g, w) in c.gamma().iter().zip(want) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
        // Recurrence cross-check on the coefficients: gamma_{n+1} = gamma_{n-1} - (2n/k) gamma_n, n >= 2.
        let g = c.gamma();
        assert!((g[3] - (g[1] - 0.5 * g[2])).abs() < 1e-13);
        assert!(g.windows(2).skip(1).all(|w| w[1] < w[0]));
    }

    #[test]
    fn degenerate_truncation() {
        let c = fourier_coeffs(&AngleMapConfig::von_mises(8.0, 0).unwrap()).unwrap();
        assert_eq!(c.gamma().len(), 1);
        assert_eq!(c.feature(1.3).values().len(), 1);
    }

    #[test]
    fn cosine_power_coefficients() {
        let c = fourier_coeffs(&AngleMapConfig::cosine_power(2).unwrap()).unwrap();
        assert_eq!(c.gamma(), &[0.5, 0.5]);
        let c4 = fourier_coeffs(&AngleMapConfig::cosine_power(4).unwrap()).unwrap();
        // cos^4(d/2) = 3/8 + 1/2 cos d + 1/8 cos 2d
        assert_eq!(c4.gamma(), &[0.375, 0.5, 0.125]);
        for i in 0..64 {
            let d = -PI + 2.0 * PI * i as f64 / 63.0;
            assert!((c.eval(d) - (0.5 * d).cos().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(AngleMapConfig::von_mises(0.0, 3).is_err());
        assert!(AngleMapConfig::von_mises(-1.0, 3).is_err());
        assert!(AngleMapConfig::cosine_power(3).is_err());
        assert!(AngleMapConfig::cosine_power(0).is_err());
        let mut bad = AngleMapConfig::cosine_power(4).unwrap();
        bad.n_freq = 3;
        assert!(fourier_coeffs(&bad).is_err());
    }

    #[test]
    fn truncated_kernel_values() {
        let c = fourier_coeffs(&AngleMapConfig::default()).unwrap();
        assert!((truncated_kernel(0.0, &c) - 0.789_897_889_917_441_1).abs() < 1e-14);
        assert!((truncated_kernel(PI, &c) + 0.063_449_835_388_428_13).abs() < 1e-14);
        assert!((truncated_kernel(1.4, &c) + 0.095_713_777_176_557_02).abs() < 1e-14);
    }

    #[test]
    fn feature_at_zero_and_norm() {
        let c = fourier_coeffs(&AngleMapConfig::default()).unwrap();
        let f = angle_feature(0.0, &c);
        for n in 0..=3 {
            assert_eq!(f.values()[n], c.gamma()[n].sqrt());
        }
        assert!(f.values()[4..].iter().all(|v| *v == 0.0));
        for &t in &[0.1, -2.9, 1.7, 3.1] {
            let f = angle_feature(t, &c);
            assert!((f.dot(&f) - c.peak()).abs() < 1e-15);
        }
        let lhs = angle_feature(0.3, &c).dot(&angle_feature(-1.1, &c));
        assert!((lhs - truncated_kernel(1.4, &c)).abs() < 1e-12);
    }

    #[test]
    fn convergence_in_n() {
        let grid: Vec<f64> = (0..4096)
            .map(|i| -PI + 2.0 * PI * i as f64 / 4095.0)
            .collect();
        let mut prev = f64::INFINITY;
        for n in 1..=16 {
            let c = fourier_coeffs(&AngleMapConfig::von_mises(8.0, n).unwrap()).unwrap();
            let err = grid
                .iter()
                .map(|d| (c.eval(*d) - vm_kernel(*d, 8.0)).abs())
                .fold(0.0, f64::max);
            assert!(err <= prev + 1e-15, "N={n}: {err} > {prev}");
            prev = err;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn wrap_range() {
        for &t in &[-10.0, -PI, -3.0, 0.0, 3.0, PI, 7.0, 100.0] {
            let w = wrap_angle(t);
            assert!(w > -PI && w <= PI, "{t} -> {w}");
            assert!(
                ((t - w) / (2.0 * PI)).fract().abs() < 1e-9
                    || ((t - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9
            );
        }
    }
}
