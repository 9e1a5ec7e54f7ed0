//! `covagg` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use covagg::angle_map::{fourier_coeffs, AngleFamily, AngleMapConfig};
use covagg::embed::{preprocess, rootsift, DescriptorSet};
use covagg::error::{Error, Result};
use covagg::eval::{average_precision, mean_ap, rank_by_score};
use covagg::formats::{
    read_descriptor_file, read_ground_truth, read_model, read_vector_file, write_atomic,
    write_descriptor_file, write_ground_truth, write_model, write_vector_file, Model, VectorFile,
};
use covagg::histogram::similarity_histogram;
use covagg::pipeline::{EmbeddingSpec, Pipeline, PipelineConfig};
use covagg::postprocess::{rn_train, RN_EXPONENT};
use covagg::scoring::{max_score, query_multi_rotation, score_polynomial, VectorDatabase};
use covagg::synth::{generate, SynthConfig};
use covagg::training::{
    gmm_train, kmeans_train, pca_train, PcaModel, GMM_DEFAULT_ITERS, KMEANS_DEFAULT_ITERS,
};
use covagg::ModulatedVector;

const DESCRIPTOR_EXT: &str = "dsc";

#[derive(Parser)]
#[command(
    name = "covagg",
    version,
    about = "Orientation-covariant descriptor aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a PCA model on descriptors.
    TrainPca(TrainPcaArgs),
    /// Learn a k-means codebook (for VLAD).
    TrainKmeans(TrainCodebookArgs),
    /// Learn a diagonal GMM (for Fisher vectors).
    TrainGmm(TrainCodebookArgs),
    /// Learn the RN rotation on encoded training images.
    TrainRn(TrainRnArgs),
    /// Encode descriptor files into a vector file.
    Encode(EncodeArgs),
    /// Rank a vector database against one query image.
    Query(QueryArgs),
    /// Run all ground-truth queries and report mAP.
    Evaluate(EvaluateArgs),
    /// Tabulate the von Mises kernel and its truncated approximation.
    AngleKernelDump(AngleKernelArgs),
    /// Histogram similarities of matched descriptors per orientation difference.
    SimHist(SimHistArgs),
    /// Generate the synthetic planted-match corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Monomial,
    Vlad,
    Fisher,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelFamily {
    VonMises,
    CosinePower,
}

#[derive(Args, Clone)]
struct AngleArgs {
    /// Angle kernel family.
    #[arg(long, value_enum)]
    angle_family: Option<KernelFamily>,
    /// Von Mises concentration.
    #[arg(long)]
    kappa: Option<f64>,
    /// Number of frequencies N (0 disables modulation).
    #[arg(long)]
    n_freq: Option<usize>,
    /// Even exponent of the cosine-power kernel.
    #[arg(long)]
    cos_power: Option<u32>,
}

impl AngleArgs {
    fn any(&self) -> bool {
        self.angle_family.is_some()
            || self.kappa.is_some()
            || self.n_freq.is_some()
            || self.cos_power.is_some()
    }

    fn config(&self) -> Result<AngleMapConfig> {
        match self.angle_family.unwrap_or(KernelFamily::VonMises) {
            KernelFamily::VonMises => {
                let d = AngleMapConfig::default();
                AngleMapConfig::von_mises(
                    self.kappa.unwrap_or(d.kappa),
                    self.n_freq.unwrap_or(d.n_freq),
                )
            }
            KernelFamily::CosinePower => AngleMapConfig::cosine_power(self.cos_power.unwrap_or(8)),
        }
    }
}

/// Encoding parameters, given either as flags or as a manifest file.
#[derive(Args, Clone)]
struct PipelineArgs {
    /// Read the full pipeline configuration from a manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the configuration actually used to this file.
    #[arg(long)]
    emit_manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    embedding: Option<Family>,
    /// Monomial degree (1-3).
    #[arg(long)]
    degree: Option<u32>,
    /// Descriptor dimension seen by a monomial embedding (after PCA).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    gmm: Option<PathBuf>,
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Do not apply RootSIFT to raw-SIFT files.
    #[arg(long)]
    no_rootsift: bool,
    #[command(flatten)]
    angle: AngleArgs,
    /// Power-law exponent (default 0.2 monomial, 0.4 VLAD/Fisher; 1 disables).
    #[arg(long)]
    power_law: Option<f64>,
    /// Apply the power law to cos/sin pair moduli (keeps rotation covariance).
    #[arg(long)]
    adapted_power_law: bool,
    #[arg(long)]
    rn: Option<PathBuf>,
    #[arg(long)]
    truncate: Option<usize>,
    /// Query rotations.
    #[arg(long)]
    rotations: Option<usize>,
}

impl PipelineArgs {
    fn flags_given(&self) -> bool {
        self.embedding.is_some()
            || self.degree.is_some()
            || self.dim.is_some()
            || self.codebook.is_some()
            || self.gmm.is_some()
            || self.pca.is_some()
            || self.no_rootsift
            || self.angle.any()
            || self.power_law.is_some()
            || self.adapted_power_law
            || self.rn.is_some()
            || self.truncate.is_some()
            || self.rotations.is_some()
    }

    fn config(&self) -> Result<PipelineConfig> {
        let cfg = if let Some(path) = &self.manifest {
            if self.flags_given() {
                return Err(contract(
                    "pipeline flags cannot be combined with --manifest",
                ));
            }
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            PipelineConfig::from_json(&text)?
        } else {
            let embedding = match self.embedding.unwrap_or(Family::Monomial) {
                Family::Monomial => EmbeddingSpec::Monomial {
                    degree: self.degree.unwrap_or(2),
                    dim: self
                        .dim
                        .ok_or_else(|| contract("--dim is required for monomial"))?,
                },
                Family::Vlad => EmbeddingSpec::Vlad {
                    codebook: self
                        .codebook
                        .clone()
                        .ok_or_else(|| contract("--codebook is required for vlad"))?,
                },
                Family::Fisher => EmbeddingSpec::Fisher {
                    gmm: self
                        .gmm
                        .clone()
                        .ok_or_else(|| contract("--gmm is required for fisher"))?,
                },
            };
            PipelineConfig {
                embedding,
                rootsift: !self.no_rootsift,
                pca: self.pca.clone(),
                angle: self.angle.config()?,
                power_law: self.power_law,
                adapted_power_law: self.adapted_power_law,
                rn: self.rn.clone(),
                truncate: self.truncate,
                rotations: self.rotations.unwrap_or(1),
            }
        };
        if let Some(path) = &self.emit_manifest {
            write_atomic(path, format!("{}\n", cfg.to_json()).as_bytes())?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainPcaArgs {
    /// Descriptor files or directories of `.dsc` files.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Output dimension.
    #[arg(long, default_value_t = 80)]
    dims: usize,
    #[arg(long)]
    no_rootsift: bool,
    /// Use at most this many descriptors (evenly strided).
    #[arg(long)]
    max_descriptors: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCodebookArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    iters: Option<usize>,
    /// PCA model applied to descriptors first.
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Rotate with the PCA model but keep every dimension (VLAD convention).
    #[arg(long)]
    no_reduce: bool,
    #[arg(long)]
    no_rootsift: bool,
    #[arg(long)]
    max_descriptors: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainRnArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Exponent of the second power law.
    #[arg(long, default_value_t = RN_EXPONENT)]
    exponent: f64,
    /// Whiten principal coordinates before the power law.
    #[arg(long)]
    whiten: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    query_desc: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Maximise the score polynomial instead of rotating the query
    /// (needs vectors that keep the block layout).
    #[arg(long)]
    polynomial: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Directory holding `<query_id>.dsc`.
    #[arg(long)]
    query_dir: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Treat each query's own id as junk.
    #[arg(long)]
    exclude_self: bool,
}

#[derive(Args)]
struct AngleKernelArgs {
    #[command(flatten)]
    angle: AngleArgs,
    /// Number of samples over [-pi, pi], endpoints included.
    #[arg(long, default_value_t = 257)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimHistArgs {
    /// First descriptor file; record i is matched with record i of --b.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    angle: AngleArgs,
    #[arg(long, default_value_t = 8)]
    bins: usize,
    #[arg(long, default_value_t = 20)]
    sim_bins: usize,
    #[arg(long)]
    no_rootsift: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    matches: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    descriptors: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    angle_noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn contract(msg: &str) -> Error {
    Error::Contract(msg.to_owned())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

/// Expands directories into their `.dsc` files; the result is sorted.
fn descriptor_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for entry in fs::read_dir(p).map_err(|e| io_err(p, e))? {
                let path = entry.map_err(|e| io_err(p, e))?.path();
                if path.extension().is_some_and(|e| e == DESCRIPTOR_EXT) {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(contract("no descriptor files found"));
    }
    Ok(out)
}

fn load_set(path: &Path, apply_rootsift: bool) -> Result<DescriptorSet> {
    let file = read_descriptor_file(path)?;
    if apply_rootsift && file.is_raw_sift() {
        file.set.map_descriptors(rootsift)
    } else {
        Ok(file.set)
    }
}

fn training_rows(
    inputs: &[PathBuf],
    apply_rootsift: bool,
    pca: Option<(&PcaModel, bool)>,
    max: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    let paths = descriptor_paths(inputs)?;
    let sets = paths
        .par_iter()
        .map(|p| load_set(p, apply_rootsift))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Vec<f64>> = sets
        .into_iter()
        .flat_map(|s| s.records().to_vec())
        .map(|r| r.descriptor)
        .collect();
    if let Some(m) = max {
        if m == 0 {
            return Err(contract("--max-descriptors must be positive"));
        }
        if rows.len() > m {
            let stride = rows.len() as f64 / m as f64;
            rows = (0..m)
                .map(|i| rows[(i as f64 * stride) as usize].clone())
                .collect();
        }
    }
    if let Some((pca, reduce)) = pca {
        rows = rows
            .par_iter()
            .map(|x| preprocess(x, pca, reduce))
            .collect::<Result<_>>()?;
    }
    log::info!("{} training descriptors", rows.len());
    Ok(rows)
}

fn encode_files(pipeline: &Pipeline, inputs: &[PathBuf]) -> Result<Vec<(String, Vec<f64>)>> {
    let paths = descriptor_paths(inputs)?;
    let mut encoded = paths
        .par_iter()
        .map(|p| {
            let set = pipeline.load_descriptors(p)?;
            Ok((set.image_id.clone(), pipeline.encode(&set)?))
        })
        .collect::<Result<Vec<_>>>()?;
    encoded.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = encoded.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(contract(&format!("duplicate image id '{}'", w[0].0)));
    }
    Ok(encoded)
}

fn load_database(path: &Path, pipeline: &Pipeline) -> Result<(VectorFile, VectorDatabase)> {
    let file = read_vector_file(path)?;
    if file.layout != pipeline.layout() {
        return Err(contract(&format!(
            "vector file layout {:?} does not match the pipeline ({:?})",
            file.layout,
            pipeline.layout()
        )));
    }
    let db = VectorDatabase::new(file.ids.clone(), &file.vectors)?;
    Ok((file, db))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainPca(a) => {
            let rows = training_rows(&a.input, !a.no_rootsift, None, a.max_descriptors)?;
            let model = pca_train(&rows, a.dims)?;
            write_model(&Model::Pca(model), &a.out)
        }
        Command::TrainKmeans(a) => {
            let pca = a
                .pca
                .as_deref()
                .map(read_model)
                .transpose()?
                .map(Model::into_pca)
                .transpose()?;
            let rows = training_rows(
                &a.input,
                !a.no_rootsift,
                pca.as_ref().map(|p| (p, !a.no_reduce)),
                a.max_descriptors,
            )?;
            let m = kmeans_train(&rows, a.k, a.iters.unwrap_or(KMEANS_DEFAULT_ITERS), a.seed)?;
            write_model(&Model::Codebook(m), &a.out)
        }
        Command::TrainGmm(a) => {
            let pca = a
                .pca
                .as_deref()
                .map(read_model)
                .transpose()?
                .map(Model::into_pca)
                .transpose()?;
            let rows = training_rows(
                &a.input,
                !a.no_rootsift,
                pca.as_ref().map(|p| (p, !a.no_reduce)),
                a.max_descriptors,
            )?;
            let m = gmm_train(&rows, a.k, a.iters.unwrap_or(GMM_DEFAULT_ITERS), a.seed)?;
            write_model(&Model::Gmm(m), &a.out)
        }
        Command::TrainRn(a) => {
            let mut cfg = a.pipeline.config()?;
            if cfg.rn.is_some() || cfg.truncate.is_some() {
                return Err(contract(
                    "RN is trained on vectors without RN or truncation",
                ));
            }
            cfg.rotations = 1;
            let pipeline = Pipeline::from_config(&cfg)?;
            let vectors: Vec<Vec<f64>> = encode_files(&pipeline, &a.input)?
                .into_iter()
                .map(|(_, v)| v)
                .collect();
            let rn = rn_train(&vectors, a.exponent)?.with_whitening(a.whiten);
            write_model(&Model::Rn(rn), &a.out)
        }
        Command::Encode(a) => {
            let pipeline = Pipeline::from_config(&a.pipeline.config()?)?;
            let mut file = VectorFile::new(pipeline.layout());
            for (id, v) in encode_files(&pipeline, &a.input)? {
                file.push(id, v)?;
            }
            log::info!(
                "encoded {} images of dimension {}",
                file.len(),
                file.layout.dim()
            );
            write_vector_file(&file, &a.out)
        }
        Command::Query(a) => {
            let cfg = a.pipeline.config()?;
            let pipeline = Pipeline::from_config(&cfg)?;
            let (file, db) = load_database(&a.db, &pipeline)?;
            let query = pipeline.load_descriptors(&a.query_desc)?;
            let (scores, thetas): (Vec<f64>, Vec<f64>) = if a.polynomial {
                if !pipeline.keeps_layout() {
                    return Err(contract(
                        "--polynomial needs vectors without RN or truncation",
                    ));
                }
                let q = pipeline.encode_modulated(&pipeline.prepare(&query)?)?;
                let (base, nf) = (q.base_dim(), q.n_freq());
                file.vectors
                    .par_iter()
                    .map(|v| {
                        let y = ModulatedVector::from_parts(base, nf, v.clone())?;
                        let (t, s) = max_score(&score_polynomial(&q, &y)?, 64)?;
                        // Report the angle to add to the query orientations.
                        Ok((s, covagg::angle_map::wrap_angle(-t)))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip()
            } else {
                query_multi_rotation(&query, &pipeline, cfg.rotations, &db)?
                    .into_iter()
                    .map(|m| (m.score, m.theta))
                    .unzip()
            };
            let order = rank_by_score(&file.ids, &scores)?;
            let mut out = String::from("rank\timage_id\tscore\ttheta_star\n");
            for (rank, &i) in order.iter().take(a.top).enumerate() {
                out.push_str(&format!(
                    "{}\t{}\t{:.6}\t{:.6}\n",
                    rank + 1,
                    file.ids[i],
                    scores[i],
                    thetas[i]
                ));
            }
            emit(None, &out)
        }
        Command::Evaluate(a) => {
            let cfg = a.pipeline.config()?;
            let pipeline = Pipeline::from_config(&cfg)?;
            let (file, db) = load_database(&a.db, &pipeline)?;
            let mut gt = read_ground_truth(&a.gt)?;
            if a.exclude_self {
                gt.exclude_self();
            }
            let queries: Vec<&str> = gt.queries().collect();
            let aps = queries
                .par_iter()
                .map(|q| {
                    let path = a.query_dir.join(format!("{q}.{DESCRIPTOR_EXT}"));
                    let set = pipeline.load_descriptors(&path)?;
                    let m = query_multi_rotation(&set, &pipeline, cfg.rotations, &db)?;
                    let scores: Vec<f64> = m.iter().map(|r| r.score).collect();
                    let ranked: Vec<&str> = rank_by_score(&file.ids, &scores)?
                        .into_iter()
                        .map(|i| file.ids[i].as_str())
                        .collect();
                    average_precision(&ranked, gt.get(q).expect("query from ground truth"))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut out = String::new();
            for (q, ap) in queries.iter().zip(&aps) {
                out.push_str(&format!("{q}\t{ap:.6}\n"));
            }
            out.push_str(&format!("mAP\t{:.6}\n", mean_ap(&aps)?));
            emit(None, &out)
        }
        Command::AngleKernelDump(a) => {
            if a.points < 2 {
                return Err(contract("--points must be at least 2"));
            }
            let cfg = a.angle.config()?;
            let coeffs = fourier_coeffs(&cfg)?;
            let target = match cfg.family {
                AngleFamily::VonMises => "k_vm",
                AngleFamily::CosinePower => "k_cos",
            };
            let mut out = format!("delta,{target},k_bar\n");
            let pi = std::f64::consts::PI;
            for i in 0..a.points {
                let delta = -pi + 2.0 * pi * i as f64 / (a.points - 1) as f64;
                out.push_str(&format!(
                    "{delta:.9},{:.12e},{:.12e}\n",
                    cfg.target_kernel(delta),
                    coeffs.eval(delta)
                ));
            }
            emit(a.out.as_deref(), &out)
        }
        Command::SimHist(a) => {
            let coeffs = fourier_coeffs(&a.angle.config()?)?;
            let x = load_set(&a.a, !a.no_rootsift)?;
            let y = load_set(&a.b, !a.no_rootsift)?;
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    actual: y.len(),
                });
            }
            let pairs: Vec<_> = x
                .records()
                .iter()
                .cloned()
                .zip(y.records().iter().cloned())
                .collect();
            let h = similarity_histogram(&pairs, a.bins, a.sim_bins, &coeffs)?;
            emit(a.out.as_deref(), &h.to_csv())
        }
        Command::Synth(a) => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                groups: a.groups.unwrap_or(d.groups),
                matches_per_query: a.matches.unwrap_or(d.matches_per_query),
                distractors: a.distractors.unwrap_or(d.distractors),
                dim: a.dim.unwrap_or(d.dim),
                descriptors_per_image: a.descriptors.unwrap_or(d.descriptors_per_image),
                noise: a.noise.unwrap_or(d.noise),
                angle_noise: a.angle_noise.unwrap_or(d.angle_noise),
                seed: a.seed.unwrap_or(d.seed),
            };
            let corpus = generate(&cfg)?;
            let images = a.out.join("images");
            fs::create_dir_all(&images).map_err(|e| io_err(&images, e))?;
            corpus.images.par_iter().try_for_each(|set| {
                write_descriptor_file(
                    set,
                    0,
                    &images.join(format!("{}.{DESCRIPTOR_EXT}", set.image_id)),
                )
            })?;
            write_ground_truth(&corpus.ground_truth, &a.out.join("gt.txt"))?;
            println!(
                "{} images, {} queries written to {}",
                corpus.images.len(),
                corpus.queries.len(),
                a.out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
