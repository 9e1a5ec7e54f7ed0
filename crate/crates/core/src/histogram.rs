//! Distribution of descriptor similarity as a function of orientation
//! difference, for matched descriptor pairs.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::angle_map::{wrap_angle, FourierCoefficients};
use crate::embed::DescriptorRecord;
use crate::error::{check_dim, Error, Result};
use crate::scoring::dot;

/// Default number of orientation-difference bins.
pub const DEFAULT_ANGLE_BINS: usize = 8;
/// Default number of similarity bins over `[-1, 1]`.
pub const DEFAULT_SIM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityHistogram {
    pub angle_bins: usize,
    pub sim_bins: usize,
    /// `raw[a][s]`: pairs in angle bin `a` whose `<x, y>` falls in bin `s`.
    pub raw: Vec<Vec<u64>>,
    /// Same for `<x, y> kbar(dtheta)`.
    pub modulated: Vec<Vec<u64>>,
}

fn bin(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * n as f64).floor();
    (t.max(0.0) as usize).min(n - 1)
}

impl SimilarityHistogram {
    pub fn angle_edges(&self, a: usize) -> (f64, f64) {
        let w = 2.0 * PI / self.angle_bins as f64;
        (-PI + a as f64 * w, -PI + (a + 1) as f64 * w)
    }

    pub fn sim_edges(&self, s: usize) -> (f64, f64) {
        let w = 2.0 / self.sim_bins as f64;
        (-1.0 + s as f64 * w, -1.0 + (s + 1) as f64 * w)
    }

    /// Bin index of an orientation difference (wrapped first).
    pub fn angle_bin(&self, delta: f64) -> usize {
        bin(wrap_angle(delta), -PI, PI, self.angle_bins)
    }

    /// Bin index of a similarity, clamped to `[-1, 1]`.
    pub fn sim_bin(&self, s: f64) -> usize {
        bin(s.clamp(-1.0, 1.0), -1.0, 1.0, self.sim_bins)
    }

    /// CSV with header `angle_lo,angle_hi,sim_lo,sim_hi,raw,modulated`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_lo,angle_hi,sim_lo,sim_hi,raw,modulated\n");
        for a in 0..self.angle_bins {
            let (alo, ahi) = self.angle_edges(a);
            for s in 0..self.sim_bins {
                let (slo, shi) = self.sim_edges(s);
                let _ = writeln!(
                    out,
                    "{alo:.6},{ahi:.6},{slo:.6},{shi:.6},{},{}",
                    self.raw[a][s], self.modulated[a][s]
                );
            }
        }
        out
    }
}

/// Histograms `<x, y>` and `<x, y> kbar(theta_x - theta_y)` per bin of
/// orientation difference over `[-pi, pi]`.
pub fn similarity_histogram(
    pairs: &[(DescriptorRecord, DescriptorRecord)],
    angle_bins: usize,
    sim_bins: usize,
    coeffs: &FourierCoefficients,
) -> Result<SimilarityHistogram> {
    if angle_bins == 0 || sim_bins == 0 {
        return Err(Error::contract("histogram needs at least one bin"));
    }
    let mut h = SimilarityHistogram {
        angle_bins,
        sim_bins,
        raw: vec![vec![0; sim_bins]; angle_bins],
        modulated: vec![vec![0; sim_bins]; angle_bins],
    };
    for (x, y) in pairs {
        check_dim(x.descriptor.len(), y.descriptor.len())?;
        let delta = wrap_angle(x.angle - y.angle);
        let s = dot(&x.descriptor, &y.descriptor);
        let a = h.angle_bin(delta);
        let rb = h.sim_bin(s);
        let mb = h.sim_bin(s * coeffs.eval(delta));
        h.raw[a][rb] += 1;
        h.modulated[a][mb] += 1;
    }
    Ok(h)
}
