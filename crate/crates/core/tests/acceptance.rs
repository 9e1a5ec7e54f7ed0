//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line.
//! Runs without the libtest harness so the lines are always shown.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covagg::angle_map::{fourier_coeffs, vm_kernel, AngleMapConfig, FourierCoefficients};
use covagg::embed::{DescriptorRecord, DescriptorSet, EmbeddingConfig};
use covagg::eval::{average_precision, mean_ap, rank_by_score, GtEntry};
use covagg::modulate::{aggregate, aggregate_sum, modulate, ModulatedVector};
use covagg::monomial::{phi_monomial, MonomialConfig};
use covagg::oracle::brute_match_kernel;
use covagg::pipeline::{Normalization, Pipeline};
use covagg::postprocess::{adapted_power_law, power_law, truncate_l2};
use covagg::scoring::{
    dot, max_score, query_multi_rotation, score_polynomial, score_polynomial_counted,
    ScorePolynomial, VectorDatabase,
};
use covagg::synth::{generate, SynthConfig};
use covagg::training::{gmm_train, kmeans_train, CodebookModel, GmmModel};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn random_set(rng: &mut ChaCha8Rng, id: &str, n: usize, d: usize) -> DescriptorSet {
    let records = (0..n)
        .map(|_| DescriptorRecord::new(unit(rng, d), rng.random_range(-PI..PI)))
        .collect();
    DescriptorSet::new(id, records).unwrap()
}

fn vm(kappa: f64, n: usize) -> FourierCoefficients {
    fourier_coeffs(&AngleMapConfig::von_mises(kappa, n).unwrap()).unwrap()
}

fn within(t: Instant, limit: Duration) -> Result<Duration, String> {
    let e = t.elapsed();
    ensure(e < limit, || format!("took {e:?}, limit {limit:?}"))?;
    Ok(e)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let grid: Vec<f64> = (0..1024)
        .map(|i| -PI + 2.0 * PI * i as f64 / 1024.0)
        .collect();
    let mut worst = 0.0f64;
    for kappa in [2.0, 4.0, 8.0, 32.0] {
        for n in [1, 3, 10] {
            let c = vm(kappa, n);
            let feats: Vec<_> = grid.iter().map(|t| c.feature(*t)).collect();
            for (i, fi) in feats.iter().enumerate() {
                for (j, fj) in feats.iter().enumerate() {
                    let e = (fi.dot(fj) - c.eval(grid[i] - grid[j])).abs();
                    worst = worst.max(e);
                }
            }
        }
    }
    ensure(worst < 1e-12, || format!("max error {worst:e}"))?;
    let e = within(t, Duration::from_secs(5))?;
    Ok(format!("max error {worst:.2e} over 12 configs, {e:.2?}"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for kappa in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0] {
        worst = worst.max((vm_kernel(0.0, kappa) - 1.0).abs());
        worst = worst.max(vm_kernel(PI, kappa).abs());
        worst = worst.max(vm_kernel(-PI, kappa).abs());
    }
    ensure(worst < 1e-12, || format!("endpoint error {worst:e}"))?;
    Ok(format!("max endpoint error {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let grid: Vec<f64> = (0..256)
        .map(|i| -PI + 2.0 * PI * i as f64 / 256.0)
        .collect();
    let mut worst = 0.0f64;
    for p in [2u32, 4, 8] {
        let c = fourier_coeffs(&AngleMapConfig::cosine_power(p).unwrap()).unwrap();
        let feats: Vec<_> = grid.iter().map(|t| c.feature(*t)).collect();
        for (i, fi) in feats.iter().enumerate() {
            for (j, fj) in feats.iter().enumerate() {
                let k = fi.dot(fj);
                let exact = ((grid[i] - grid[j]) / 2.0).cos().powi(p as i32);
                worst = worst.max((k - exact).abs());
                ensure((-1e-15..=1.0 + 1e-15).contains(&k), || {
                    format!("P={p}: value {k} outside [0, 1]")
                })?;
            }
        }
        let mut prev = f64::INFINITY;
        for i in 0..1024 {
            let v = c.eval(PI * i as f64 / 1023.0);
            ensure(v <= prev + 1e-15, || {
                format!("P={p}: not monotone at sample {i}")
            })?;
            prev = v;
        }
    }
    ensure(worst < 1e-12, || format!("identity error {worst:e}"))?;
    Ok(format!(
        "max error {worst:.2e}, range and monotonicity hold"
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for d in [8, 80] {
        for p in [2u32, 3] {
            let cfg = MonomialConfig::new(p, d).unwrap();
            for _ in 0..1000 {
                let (x, y) = (unit(&mut rng, d), unit(&mut rng, d));
                let k = dot(
                    &phi_monomial(&x, &cfg).unwrap(),
                    &phi_monomial(&y, &cfg).unwrap(),
                );
                worst = worst.max((k - dot(&x, &y).powi(p as i32)).abs());
            }
        }
    }
    ensure(worst < 1e-10, || format!("kernel error {worst:e}"))?;
    let d2 = MonomialConfig::new(2, 80).unwrap().output_dim();
    let d3 = MonomialConfig::new(3, 80).unwrap().output_dim();
    ensure(d2 == 3240 && d3 == 88_560, || format!("dims {d2}, {d3}"))?;
    Ok(format!("max error {worst:.2e}; dims {d2}, {d3}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let configs = [vm(8.0, 3), vm(2.0, 1), vm(32.0, 10)];
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let c = &configs[trial % configs.len()];
        let d = rng.random_range(1..=16);
        let (x, y) = (unit(&mut rng, d), unit(&mut rng, d));
        let (tx, ty) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let mx = modulate(&x, &c.feature(tx));
        let my = modulate(&y, &c.feature(ty));
        let lhs = dot(mx.as_slice(), my.as_slice());
        let rhs = dot(&x, &y) * c.eval(tx - ty);
        worst = worst.max((lhs - rhs).abs());
    }
    ensure(worst < 1e-10, || format!("error {worst:e}"))?;
    Ok(format!("max error {worst:.2e} over 1000 trials"))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 8;
    let train: Vec<Vec<f64>> = (0..400).map(|_| unit(&mut rng, d)).collect();
    let families = [
        EmbeddingConfig::Monomial(MonomialConfig::new(2, d).unwrap()),
        EmbeddingConfig::Vlad(kmeans_train(&train, 4, 50, 1).unwrap()),
        EmbeddingConfig::Fisher(gmm_train(&train, 4, 50, 1).unwrap()),
    ];
    let c = vm(8.0, 3);
    let mut worst = 0.0f64;
    for emb in &families {
        for _ in 0..100 {
            let x = random_set(&mut rng, "x", 10, d);
            let y = random_set(&mut rng, "y", 10, d);
            let fast = dot(
                aggregate(&x, emb, &c).unwrap().as_slice(),
                aggregate(&y, emb, &c).unwrap().as_slice(),
            );
            let brute = brute_match_kernel(&x, &y, emb, &c).unwrap();
            worst = worst.max((fast - brute).abs());
        }
    }
    ensure(worst < 1e-8, || format!("error {worst:e}"))?;
    let e = within(t, Duration::from_secs(30))?;
    Ok(format!("max error {worst:.2e} over 3 x 100 pairs, {e:.2?}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = vm(8.0, 3);
    let emb = EmbeddingConfig::Monomial(MonomialConfig::new(2, 8).unwrap());
    let (mut norm_err, mut poly_err, mut max_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let x = random_set(&mut rng, "x", 30, 8);
        let y = random_set(&mut rng, "y", 30, 8);
        let t0 = rng.random_range(-PI..PI);
        let xs = x.shifted(t0);

        let n0 = aggregate_sum(&x, &emb, &c).unwrap().norm();
        let n1 = aggregate_sum(&xs, &emb, &c).unwrap().norm();
        norm_err = norm_err.max((n0 - n1).abs() / n0);

        let ax = aggregate(&x, &emb, &c).unwrap();
        let axs = aggregate(&xs, &emb, &c).unwrap();
        let ay = aggregate(&y, &emb, &c).unwrap();
        let p = score_polynomial(&ax, &ay).unwrap();
        let ps = score_polynomial(&axs, &ay).unwrap();
        for i in 0..256 {
            let th = -PI + 2.0 * PI * i as f64 / 256.0;
            // Adding t0 to every orientation acts as a rotation by -t0.
            poly_err = poly_err.max((ps.eval(th) - p.eval(th - t0)).abs());
        }

        let (_, best) = max_score(&p, 64).unwrap();
        let dense = dense_max(&p);
        max_err = max_err.max((best - dense).abs());
    }
    let mut lower = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=5);
        let p = ScorePolynomial::new(
            rng.random_range(-1.0..1.0),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (_, best) = max_score(&p, 64).unwrap();
        lower = lower.max(dense_max(&p) - best);
    }
    ensure(norm_err < 1e-10, || format!("(a) norm change {norm_err:e}"))?;
    ensure(poly_err < 1e-9, || {
        format!("(b) polynomial deviation {poly_err:e}")
    })?;
    ensure(max_err < 1e-6, || {
        format!("(c) max_score deviation {max_err:e}")
    })?;
    ensure(lower < 1e-6, || {
        format!("(c) below dense grid by {lower:e}")
    })?;
    Ok(format!(
        "(a) {norm_err:.1e} (b) {poly_err:.1e} (c) {max_err:.1e}, random polynomials {:.1e}",
        lower.max(0.0)
    ))
}

fn dense_max(p: &ScorePolynomial) -> f64 {
    (0..10_000)
        .map(|i| p.eval(-PI + 2.0 * PI * i as f64 / 10_000.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in [0usize, 1, 3, 10] {
        for dim in [1usize, 17, 528] {
            let len = dim * (2 * n + 1);
            let mut v = || {
                (0..len)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            };
            let x = ModulatedVector::from_parts(dim, n, v()).unwrap();
            let y = ModulatedVector::from_parts(dim, n, v()).unwrap();
            let (_, count) = score_polynomial_counted(&x, &y).unwrap();
            ensure(count.calls == 1 + 4 * n && count.length == dim, || {
                format!("N={n} D={dim}: {count:?}")
            })?;
            ensure(count.mac() == dim * (1 + 4 * n), || {
                format!("N={n}: mac {}", count.mac())
            })?;
        }
    }
    Ok("1+4N inner products of length D for N in {0,1,3,10}".into())
}

fn encoded_len(emb: EmbeddingConfig, n: usize, d: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = Pipeline::new(emb, vm(8.0, n));
    p.encode(&random_set(&mut rng, "x", 5, d)).unwrap().len()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut got = Vec::new();
    for n in [1, 3, 6] {
        got.push(encoded_len(
            EmbeddingConfig::Monomial(MonomialConfig::new(1, 80).unwrap()),
            n,
            80,
        ));
    }
    got.push(encoded_len(
        EmbeddingConfig::Monomial(MonomialConfig::new(2, 80).unwrap()),
        3,
        80,
    ));
    let centroids: Vec<f64> = (0..32).flat_map(|_| unit(&mut rng, 128)).collect();
    got.push(encoded_len(
        EmbeddingConfig::Vlad(CodebookModel::new(32, 128, centroids).unwrap()),
        3,
        128,
    ));
    let means: Vec<f64> = (0..32).flat_map(|_| unit(&mut rng, 80)).collect();
    let gmm = GmmModel::new(32, 80, vec![1.0 / 32.0; 32], means, vec![0.01; 32 * 80]).unwrap();
    got.push(encoded_len(EmbeddingConfig::Fisher(gmm), 3, 80));
    let want = vec![240, 560, 1040, 22_680, 28_672, 17_920];
    ensure(got == want, || {
        format!("lengths {got:?}, expected {want:?}")
    })?;
    Ok(format!("{got:?}"))
}

/// Straightforward AP: for every relevant item, count relevant and counted
/// items up to its position in the junk-free ranking.
fn reference_ap(ranked: &[String], relevant: &[String], junk: &[String]) -> f64 {
    let kept: Vec<&String> = ranked.iter().filter(|id| !junk.contains(id)).collect();
    let mut total = 0.0;
    for r in relevant {
        if let Some(pos) = kept.iter().position(|id| *id == r) {
            let rel_before = kept[..=pos]
                .iter()
                .filter(|id| relevant.contains(id))
                .count();
            total += rel_before as f64 / (pos + 1) as f64;
        }
    }
    total / relevant.len() as f64
}

fn run_retrieval(
    pipeline: &Pipeline,
    rotations: usize,
    corpus: &covagg::synth::SynthCorpus,
) -> Result<(f64, f64), String> {
    let ids: Vec<String> = corpus.images.iter().map(|s| s.image_id.clone()).collect();
    let vectors: Vec<Vec<f64>> = corpus
        .images
        .iter()
        .map(|s| pipeline.encode(s).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let db = VectorDatabase::new(ids.clone(), &vectors).map_err(|e| e.to_string())?;
    let mut aps = Vec::new();
    let mut max_dev = 0.0f64;
    for q in &corpus.queries {
        let query = corpus.image(q).unwrap();
        let matches =
            query_multi_rotation(query, pipeline, rotations, &db).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = matches.iter().map(|m| m.score).collect();
        let order = rank_by_score(&ids, &scores).map_err(|e| e.to_string())?;
        let ranked: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
        let gt: &GtEntry = corpus.ground_truth.get(q).unwrap();
        let ap = average_precision(&ranked, gt).map_err(|e| e.to_string())?;
        let rel: Vec<String> = gt.relevant().iter().cloned().collect();
        let junk: Vec<String> = gt.junk().iter().cloned().collect();
        max_dev = max_dev.max((ap - reference_ap(&ranked, &rel, &junk)).abs());
        aps.push(ap);
    }
    let map = mean_ap(&aps).map_err(|e| e.to_string())?;
    let reference_map = aps.iter().sum::<f64>() / aps.len() as f64;
    Ok((map, max_dev.max((map - reference_map).abs())))
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig::default();
    let corpus = generate(&cfg).map_err(|e| e.to_string())?;
    ensure(corpus.images.len() == 200, || {
        format!("{} images", corpus.images.len())
    })?;
    let emb = EmbeddingConfig::Monomial(MonomialConfig::new(2, cfg.dim).unwrap());
    let with =
        Pipeline::new(emb.clone(), vm(8.0, 3)).with_normalization(Normalization::PowerLaw(0.2));
    let without = Pipeline::new(emb, vm(8.0, 0)).with_normalization(Normalization::PowerLaw(0.2));
    let (map_mod, dev_mod) = run_retrieval(&with, 8, &corpus)?;
    let (map_plain, dev_plain) = run_retrieval(&without, 8, &corpus)?;
    let gain = map_mod - map_plain;
    ensure(gain >= 0.10, || {
        format!("mAP {map_mod:.4} vs {map_plain:.4}: gain {gain:.4} < 0.10")
    })?;
    let dev = dev_mod.max(dev_plain);
    ensure(dev < 1e-12, || {
        format!("AP deviates from reference by {dev:e}")
    })?;
    let e = within(t, Duration::from_secs(120))?;
    Ok(format!(
        "mAP {:.1} with modulation vs {:.1} without (+{:.1} points), AP check {dev:.0e}, {e:.2?}",
        100.0 * map_mod,
        100.0 * map_plain,
        100.0 * gain
    ))
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut phase_err = 0.0f64;
    let mut norm_err = 0.0f64;
    for _ in 0..50 {
        let (d, n) = (rng.random_range(1..20), rng.random_range(1..5));
        let data: Vec<f64> = (0..d * (2 * n + 1))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x = ModulatedVector::from_parts(d, n, data).unwrap();
        let a = rng.random_range(0.1..1.0);
        let z = adapted_power_law(&x, a).unwrap();
        for f in 1..=n {
            for j in 0..d {
                let before = x.sin_block(f)[j].atan2(x.cos_block(f)[j]);
                let after = z.sin_block(f)[j].atan2(z.cos_block(f)[j]);
                phase_err = phase_err.max((before - after).abs());
            }
        }
        let p = power_law(x.as_slice(), a).unwrap();
        norm_err = norm_err.max((dot(&p, &p).sqrt() - 1.0).abs());
        let t = truncate_l2(&p, rng.random_range(1..=p.len())).unwrap();
        norm_err = norm_err.max((dot(&t, &t).sqrt() - 1.0).abs());
    }
    ensure(phase_err < 1e-10, || format!("phase change {phase_err:e}"))?;
    ensure(norm_err < 1e-12, || format!("norm error {norm_err:e}"))?;

    let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let ap = |ranked: &[&str], rel: &[&str], junk: &[&str]| {
        average_precision(&ids(ranked), &GtEntry::new(ids(rel), ids(junk)).unwrap()).unwrap()
    };
    let cases = [
        (ap(&["a", "b"], &["a"], &[]), 1.0),
        (ap(&["a", "x", "c", "y"], &["a", "c"], &[]), 5.0 / 6.0),
        (ap(&["j1", "j2", "r"], &["r"], &["j1", "j2"]), 1.0),
        (mean_ap(&[1.0, 0.5]).unwrap(), 0.75),
    ];
    for (got, want) in cases {
        ensure((got - want).abs() < 1e-15, || format!("AP {got} != {want}"))?;
    }
    ensure(
        GtEntry::new(ids(&[]), ids(&["a"]))
            .map(|g| average_precision(&ids(&["a"]), &g).is_err())
            .unwrap_or(false),
        || "empty relevant set accepted".into(),
    )?;
    Ok(format!(
        "phase {phase_err:.1e}, norms {norm_err:.1e}, AP hand cases incl. 5/6"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("angle-map exactness", criterion_1),
        ("von Mises endpoints", criterion_2),
        ("cosine-power identity", criterion_3),
        ("monomial kernel exactness", criterion_4),
        ("modulation identity", criterion_5),
        ("aggregate/oracle equivalence", criterion_6),
        ("rotation covariance", criterion_7),
        ("cost contract", criterion_8),
        ("dimension ledger", criterion_9),
        ("synthetic end-to-end", criterion_10),
        ("post-processing properties", criterion_11),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: panicked", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
