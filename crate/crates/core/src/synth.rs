//! Seeded synthetic retrieval corpus with planted rotated matches.
//!
//! Each group has a query image of random unit descriptors with uniform
//! orientations. Its true matches copy every descriptor with Gaussian noise
//! (renormalised) and add one random global rotation to all orientations.
//! Distractors copy the descriptors of a group in the same noisy way but draw
//! every orientation independently, so they can only be told apart from true
//! matches through orientation consistency.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embed::{l2_normalize, DescriptorRecord, DescriptorSet};
use crate::error::{Error, Result};
use crate::eval::{GroundTruth, GtEntry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub groups: usize,
    pub matches_per_query: usize,
    pub distractors: usize,
    pub dim: usize,
    pub descriptors_per_image: usize,
    /// Standard deviation of the per-component descriptor noise.
    pub noise: f64,
    /// Standard deviation of per-descriptor orientation noise on matches.
    pub angle_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 12 groups of 1 query + 3 matches and 152 distractors: 200 images.
    fn default() -> Self {
        Self {
            groups: 12,
            matches_per_query: 3,
            distractors: 152,
            dim: 32,
            descriptors_per_image: 50,
            noise: 0.1,
            angle_noise: 0.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    /// Every image, queries included.
    pub images: Vec<DescriptorSet>,
    /// Ids of the query images (also present in `images`).
    pub queries: Vec<String>,
    /// Relevant: the planted matches; junk: the query itself.
    pub ground_truth: GroundTruth,
    /// Global rotation applied to each planted match, by id.
    pub rotations: Vec<(String, f64)>,
}

impl SynthCorpus {
    pub fn image(&self, id: &str) -> Option<&DescriptorSet> {
        self.images.iter().find(|s| s.image_id == id)
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
        if l2_normalize(&mut v) > 1e-6 {
            return v;
        }
    }
}

fn noisy(rng: &mut ChaCha8Rng, x: &[f64], noise: &Normal<f64>) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = x.iter().map(|xi| xi + noise.sample(rng)).collect();
        if l2_normalize(&mut v) > 1e-6 {
            return v;
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.groups == 0 || cfg.matches_per_query == 0 || cfg.dim == 0 {
        return Err(Error::contract(
            "synthetic corpus needs groups, matches and dim >= 1",
        ));
    }
    if cfg.descriptors_per_image == 0 {
        return Err(Error::contract(
            "synthetic images need at least one descriptor",
        ));
    }
    let noise = Normal::new(0.0, cfg.noise)
        .map_err(|_| Error::contract("descriptor noise must be finite and >= 0"))?;
    let angle_noise = Normal::new(0.0, cfg.angle_noise)
        .map_err(|_| Error::contract("angle noise must be finite and >= 0"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut images = Vec::new();
    let mut queries = Vec::new();
    let mut rotations = Vec::new();
    let mut gt = GroundTruth::new();
    let mut bases = Vec::with_capacity(cfg.groups);

    for g in 0..cfg.groups {
        let base: Vec<(Vec<f64>, f64)> = (0..cfg.descriptors_per_image)
            .map(|_| (random_unit(&mut rng, cfg.dim), rng.random_range(-PI..PI)))
            .collect();
        let qid = format!("g{g:03}_q");
        images.push(DescriptorSet::new(
            qid.clone(),
            base.iter()
                .map(|(x, t)| DescriptorRecord::new(x.clone(), *t))
                .collect(),
        )?);
        let mut relevant = Vec::new();
        for m in 0..cfg.matches_per_query {
            let id = format!("g{g:03}_m{m}");
            let rot = rng.random_range(-PI..PI);
            let records = base
                .iter()
                .map(|(x, t)| {
                    let v = noisy(&mut rng, x, &noise);
                    DescriptorRecord::new(v, t + rot + angle_noise.sample(&mut rng))
                })
                .collect();
            images.push(DescriptorSet::new(id.clone(), records)?);
            rotations.push((id.clone(), rot));
            relevant.push(id);
        }
        gt.insert(qid.clone(), GtEntry::new(relevant, [qid.clone()])?);
        queries.push(qid);
        bases.push(base);
    }

    for i in 0..cfg.distractors {
        let base = &bases[i % cfg.groups];
        let records = base
            .iter()
            .map(|(x, _)| {
                let v = noisy(&mut rng, x, &noise);
                DescriptorRecord::new(v, rng.random_range(-PI..PI))
            })
            .collect();
        images.push(DescriptorSet::new(format!("d{i:04}"), records)?);
    }

    Ok(SynthCorpus {
        images,
        queries,
        ground_truth: gt,
        rotations,
    })
}
