//! Similarity between image vectors, with and without rotation invariance.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::angle_map::wrap_angle;
use crate::embed::DescriptorSet;
use crate::error::{check_dim, Error, Result};
use crate::modulate::ModulatedVector;
use crate::pipeline::Pipeline;

/// Golden-section steps used by [`max_score`] after sampling.
pub const REFINE_STEPS: usize = 20;
/// Default number of samples for [`max_score`].
pub const DEFAULT_SAMPLES: usize = 64;
/// Default number of query rotations.
pub const DEFAULT_ROTATIONS: usize = 8;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plain inner product of two image vectors.
pub fn score_cosine(x: &ModulatedVector, y: &ModulatedVector) -> Result<f64> {
    x.same_layout(y)?;
    Ok(dot(x.as_slice(), y.as_slice()))
}

/// `s(theta) = c0 + sum_n a_n cos(n theta) + b_n sin(n theta)`: the score
/// between `X` rotated by `theta` and `Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorePolynomial {
    pub c0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScorePolynomial {
    pub fn new(c0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        Ok(Self { c0, a, b })
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut s = self.c0;
        for (n, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let (sn, cn) = ((n + 1) as f64 * theta).sin_cos();
            s += a * cn + b * sn;
        }
        s
    }
}

/// Number and length of the inner products behind a [`ScorePolynomial`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DotCount {
    pub calls: usize,
    pub length: usize,
}

impl DotCount {
    /// Total multiply-accumulates.
    pub fn mac(&self) -> usize {
        self.calls * self.length
    }
}

struct CountingDot {
    count: DotCount,
}

impl CountingDot {
    fn dot(&mut self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.count.calls += 1;
        self.count.length = a.len();
        dot(a, b)
    }
}

/// Coefficients of the rotation score polynomial, with the inner-product count.
///
/// Uses exactly `1 + 4N` inner products of length `D`.
pub fn score_polynomial_counted(
    x: &ModulatedVector,
    y: &ModulatedVector,
) -> Result<(ScorePolynomial, DotCount)> {
    x.same_layout(y)?;
    let mut ip = CountingDot {
        count: DotCount::default(),
    };
    let c0 = ip.dot(x.x0(), y.x0());
    let n_freq = x.n_freq();
    let mut a = Vec::with_capacity(n_freq);
    let mut b = Vec::with_capacity(n_freq);
    for n in 1..=n_freq {
        let cc = ip.dot(x.cos_block(n), y.cos_block(n));
        let ss = ip.dot(x.sin_block(n), y.sin_block(n));
        let cs = ip.dot(x.cos_block(n), y.sin_block(n));
        let sc = ip.dot(x.sin_block(n), y.cos_block(n));
        a.push(cc + ss);
        b.push(sc - cs);
    }
    Ok((ScorePolynomial { c0, a, b }, ip.count))
}

pub fn score_polynomial(x: &ModulatedVector, y: &ModulatedVector) -> Result<ScorePolynomial> {
    score_polynomial_counted(x, y).map(|(p, _)| p)
}

fn golden_max(p: &ScorePolynomial, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (p.eval(x1), p.eval(x2));
    for _ in 0..REFINE_STEPS {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = p.eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = p.eval(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximises the score polynomial over the rotation angle.
///
/// `samples` uniform angles over `[-pi, pi)` are evaluated; every sample that
/// is a discrete local maximum is refined by golden-section search on the
/// interval between its neighbours, and the best value is returned as
/// `(theta_star, score)` with `theta_star` in `(-pi, pi]`.
pub fn max_score(p: &ScorePolynomial, samples: usize) -> Result<(f64, f64)> {
    let min = 2 * p.degree() + 1;
    if samples < min {
        return Err(Error::contract(format!(
            "max_score needs at least {min} samples for degree {}, got {samples}",
            p.degree()
        )));
    }
    let step = 2.0 * PI / samples as f64;
    let values: Vec<f64> = (0..samples)
        .map(|i| p.eval(-PI + i as f64 * step))
        .collect();
    let mut best = (0.0, f64::NEG_INFINITY);
    for (i, v) in values.iter().enumerate() {
        if *v > best.1 {
            best = (-PI + i as f64 * step, *v);
        }
    }
    if p.degree() == 0 {
        return Ok((wrap_angle(best.0), best.1));
    }
    for i in 0..samples {
        let prev = values[(i + samples - 1) % samples];
        let next = values[(i + 1) % samples];
        if values[i] >= prev && values[i] >= next {
            let center = -PI + i as f64 * step;
            let (t, v) = golden_max(p, center - step, center + step);
            if v > best.1 {
                best = (t, v);
            }
        }
    }
    Ok((wrap_angle(best.0), best.1))
}

/// Image vectors of a database, one row per image.
#[derive(Clone, Debug)]
pub struct VectorDatabase {
    ids: Vec<String>,
    vectors: DMatrix<f64>,
}

impl VectorDatabase {
    pub fn new<R: AsRef<[f64]>>(ids: Vec<String>, rows: &[R]) -> Result<Self> {
        check_dim(ids.len(), rows.len())?;
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        for r in rows {
            check_dim(dim, r.as_ref().len())?;
        }
        let vectors = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].as_ref()[j]);
        Ok(Self { ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.vectors.row(i).iter().copied().collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// `M x Q` matrix of inner products against the columns of `queries`.
    pub fn score_matrix<R: AsRef<[f64]>>(&self, queries: &[R]) -> Result<DMatrix<f64>> {
        for q in queries {
            check_dim(self.dim(), q.as_ref().len())?;
        }
        let q = DMatrix::from_fn(self.dim(), queries.len(), |i, j| queries[j].as_ref()[i]);
        Ok(&self.vectors * q)
    }
}

/// Best score of one database image over the query rotations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatch {
    pub score: f64,
    /// Index `r` of the winning rotation.
    pub rotation: usize,
    /// Angle `2 pi r / n_rot` added to the query orientations, wrapped.
    pub theta: f64,
}

/// Encodes the query once per rotation hypothesis (angles shifted by
/// `2 pi r / n_rot`, full pipeline each time), scores all hypotheses against
/// the database in a single matrix product and keeps the best per image.
pub fn query_multi_rotation(
    query: &DescriptorSet,
    pipeline: &Pipeline,
    n_rot: usize,
    database: &VectorDatabase,
) -> Result<Vec<RotationMatch>> {
    if n_rot == 0 {
        return Err(Error::contract("at least one query rotation is required"));
    }
    let prepared = pipeline.prepare(query)?;
    let thetas: Vec<f64> = (0..n_rot)
        .map(|r| 2.0 * PI * r as f64 / n_rot as f64)
        .collect();
    let encoded = thetas
        .iter()
        .map(|t| pipeline.encode_prepared(&prepared.shifted(*t)))
        .collect::<Result<Vec<_>>>()?;
    let scores = database.score_matrix(&encoded)?;
    Ok((0..database.len())
        .map(|i| {
            let mut best = RotationMatch {
                score: f64::NEG_INFINITY,
                rotation: 0,
                theta: 0.0,
            };
            for r in 0..n_rot {
                let s = scores[(i, r)];
                if s > best.score {
                    best = RotationMatch {
                        score: s,
                        rotation: r,
                        theta: wrap_angle(thetas[r]),
                    };
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(rng: &mut ChaCha8Rng, n: usize) -> ScorePolynomial {
        ScorePolynomial::new(
            rng.random_range(-1.0..1.0),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_polynomial() {
        let p = ScorePolynomial::new(0.3, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let (_, s) = max_score(&p, 16).unwrap();
        assert_eq!(s, 0.3);
    }

    #[test]
    fn cosine_maximum() {
        let p = ScorePolynomial::new(0.25, vec![1.0], vec![0.0]).unwrap();
        let (t, s) = max_score(&p, 64).unwrap();
        assert!(t.abs() < 1e-4, "{t}");
        assert!((s - 1.25).abs() < 1e-9);
    }

    #[test]
    fn beats_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(1..=5);
            let p = random_poly(&mut rng, n);
            let dense = (0..10_000)
                .map(|i| p.eval(-PI + 2.0 * PI * i as f64 / 10_000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let (t, s) = max_score(&p, DEFAULT_SAMPLES).unwrap();
            assert!(s >= dense - 1e-6, "{s} < {dense}");
            assert!((p.eval(t) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let p = ScorePolynomial::new(0.0, vec![1.0; 3], vec![0.0; 3]).unwrap();
        assert!(max_score(&p, 6).is_err());
        assert!(max_score(&p, 7).is_ok());
    }

    #[test]
    fn polynomial_counts_and_degenerate_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..5 * 7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = ModulatedVector::from_parts(5, 3, data.clone()).unwrap();
        let (_, count) = score_polynomial_counted(&x, &x).unwrap();
        assert_eq!(
            count,
            DotCount {
                calls: 13,
                length: 5
            }
        );
        assert_eq!(count.mac(), 5 * (1 + 4 * 3));

        let z = ModulatedVector::from_parts(5, 0, data[..5].to_vec()).unwrap();
        let p = score_polynomial(&z, &z).unwrap();
        assert_eq!(p.degree(), 0);
        assert_eq!(p.c0, score_cosine(&z, &z).unwrap());
    }

    #[test]
    fn layout_mismatch() {
        let x = ModulatedVector::zeros(4, 1);
        let y = ModulatedVector::zeros(4, 2);
        assert!(score_cosine(&x, &y).is_err());
        assert!(score_polynomial(&x, &y).is_err());
    }

    #[test]
    fn database_matrix_product() {
        let db = VectorDatabase::new(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 0.0], vec![0.0, 2.0]],
        )
        .unwrap();
        let s = db.score_matrix(&[vec![1.0, 1.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(1, 0)], 2.0);
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 1)], 0.0);
    }
}
