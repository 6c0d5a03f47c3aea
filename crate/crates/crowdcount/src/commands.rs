//! The `crowdcount` command line.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use crowdcount_core::cluster::{cluster_adaptive, silhouette};
use crowdcount_core::eval::{hourly_difference, ElbowHistogram, SilhouetteSummary, TemperatureSeries, ELBOW_BIN_WIDTH};
use crowdcount_core::features::FeatureVector;
use crowdcount_core::nn::{autoencoder_input, ModelKind};
use crowdcount_core::pipeline::{
    cluster_features, cluster_image, count_people, evaluate, image_seed, stratified_split, train_autoencoder, train_cnn,
};
use crowdcount_core::point::preprocess;
use crowdcount_core::projection::GroundPool;
use crowdcount_core::quant::{quantize_model, ModelSize};
use crowdcount_core::rng::{derive_seed, seeded};
use crowdcount_core::sim::{gen_ground_pool, gen_labeled_dataset, gen_scene};
use crowdcount_core::{Frame, Point3};
use rand::Rng;

use crate::bench::bench_model;
use crate::config::{Config, Stream};
use crate::dataset::{read_features, read_images, read_labels, write_features, write_images, write_labels, ObjectLabel};
use crate::error::{Error, Result};
use crate::frames::{read_frames, write_frames, FrameFormat, FrameReader, FrameWriter};
use crate::model_file::{Model, ModelFile, TrainInfo};
use crate::report::{
    write_line, ClusterFrameRecord, ClusterSummaryRecord, CountRecord, HourlyRecord, LatencyRecord, MetricsRecord,
    TempStatsRecord,
};
use crate::temps::{format_timestamp, read_log};

/// Files written by `simulate`.
pub mod files {
    pub const CLUSTERS: &str = "clusters.ndjson";
    pub const LABELS: &str = "labels.csv";
    pub const POOL: &str = "pool.ndjson";
    pub const SCENES: &str = "scenes.ndjson";
    pub const SCENE_LABELS: &str = "scene_labels.csv";
}

#[derive(Debug, Parser)]
#[command(name = "crowdcount", version, about = "Counts people in roadside LiDAR captures")]
pub struct Cli {
    /// TOML config file; every key has a default.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Autoencoder,
    Cnn2d,
}

impl Arch {
    fn kind(self) -> ModelKind {
        match self {
            Arch::Autoencoder => ModelKind::Autoencoder,
            Arch::Cnn2d => ModelKind::Cnn2d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled clusters, a ground pool and counting scenes.
    Simulate {
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove ground returns and points outside the region of interest.
    Preprocess {
        #[arg(long, default_value = "-")]
        frames: String,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long)]
        input_format: Option<FrameFormat>,
        #[arg(long)]
        output_format: Option<FrameFormat>,
    },
    /// Adaptive DBSCAN per frame, then a silhouette and elbow summary.
    Cluster {
        #[arg(long, default_value = "-")]
        frames: String,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long)]
        input_format: Option<FrameFormat>,
    },
    /// Turn a simulated dataset into model inputs.
    Featurize {
        #[arg(long)]
        arch: Arch,
        /// Directory written by `simulate`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Features CSV for the autoencoder, images NDJSON for the CNN.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model.
    Train {
        #[arg(long)]
        arch: Arch,
        /// A `simulate` directory, a features CSV or an images NDJSON file.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Ground pool (frames file) for a CNN trained from an images file.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
    },
    /// Classification metrics of a model on labeled data.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Post-training 8-bit quantization.
    Quantize {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Calibration data; the first inputs of the training split are used.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-cluster inference latency.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Count people frame by frame; reads standard input by default.
    Count {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        frames: Option<String>,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long)]
        input_format: Option<FrameFormat>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Pole temperature statistics and hourly series.
    Temps {
        #[arg(long)]
        pole: PathBuf,
        #[arg(long)]
        weather: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
}

/// Standard streams, replaceable in tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// status: 0 on success, 1 for usage errors, 2 for data errors.
pub fn run<I, T>(args: I, io: Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = io.stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = io.stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let stderr = &mut *io.stderr;
    match execute(cli, io.stdin, io.stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate { out } => simulate(&cfg, &out),
        Command::Preprocess { frames, out, input_format, output_format } => {
            let reader = frame_reader(&frames, input_format, stdin)?;
            let out_format = output_format.or_else(|| FrameFormat::from_path(Path::new(&out))).unwrap_or(FrameFormat::Ndjson);
            with_output(&out, stdout, |w| {
                let mut writer = FrameWriter::new(w, out_format)?;
                for frame in reader {
                    writer.write(&preprocess(&frame?, &cfg.roi()))?;
                }
                writer.finish()?;
                Ok(())
            })
        }
        Command::Cluster { frames, out, input_format } => {
            let reader = frame_reader(&frames, input_format, stdin)?;
            with_output(&out, stdout, |w| cluster(&cfg, reader, w))
        }
        Command::Featurize { arch, data, out } => featurize(&cfg, arch, &need(data, &cfg.paths.data, "--data")?, &out),
        Command::Train { arch, data, out, pool, split } => {
            let data = need(data, &cfg.paths.data, "--data")?;
            train(&cfg, arch, &data, &out, pool.as_deref(), split)
        }
        Command::Evaluate { model, data, split, out, format } => {
            let file = ModelFile::load(&need(model, &cfg.paths.model, "--model")?)?;
            let (inputs, labels) = load_split(&cfg, &need(data, &cfg.paths.data, "--data")?, &file, split)?;
            let metrics = evaluate(&file.model, &inputs, &labels)?;
            let record = MetricsRecord::new(file.model.kind().as_str(), file.model.is_quantized(), split_name(split), &metrics);
            with_output(&out, stdout, |w| match format {
                ReportFormat::Json => write_line(w, &record),
                ReportFormat::Table => Ok(w.write_all(record.table().as_bytes())?),
            })
        }
        Command::Quantize { model, data, out } => {
            let file = ModelFile::load(&need(model, &cfg.paths.model, "--model")?)?;
            let summary = quantize(&cfg, &file, &need(data, &cfg.paths.data, "--data")?, &out)?;
            write_line(stdout, &summary)
        }
        Command::Bench { model, data, split, warmup, repetitions, out, format } => {
            let file = ModelFile::load(&need(model, &cfg.paths.model, "--model")?)?;
            let (inputs, _) = load_split(&cfg, &need(data, &cfg.paths.data, "--data")?, &file, split)?;
            let warmup = warmup.unwrap_or(cfg.bench.warmup);
            let repetitions = repetitions.unwrap_or(cfg.bench.repetitions);
            if repetitions == 0 || warmup + repetitions < 30 {
                return Err(Error::Usage("bench needs at least 30 warm-up plus measured repetitions".into()));
            }
            let report = bench_model(&file.model, &inputs, warmup, repetitions)?;
            let record = LatencyRecord::new(file.model.kind().as_str(), file.model.is_quantized(), warmup, &report);
            with_output(&out, stdout, |w| match format {
                ReportFormat::Json => write_line(w, &record),
                ReportFormat::Table => Ok(w.write_all(record.table().as_bytes())?),
            })
        }
        Command::Count { model, frames, out, input_format, format } => {
            let file = ModelFile::load(&need(model, &cfg.paths.model, "--model")?)?;
            let source = match frames {
                Some(f) => f,
                None => cfg.paths.frames.as_ref().map_or("-".into(), |p| p.display().to_string()),
            };
            let reader = frame_reader(&source, input_format, stdin)?;
            with_output(&out, stdout, |w| count(&cfg, &file, reader, w, format))
        }
        Command::Temps { pole, weather, out, format } => with_output(&out, stdout, |w| temps(&pole, weather.as_deref(), w, format)),
    }
}

fn need(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Error::Usage(format!("{name} is required (or set it under [paths] in the config)")))
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
        Split::All => "all",
    }
}

/// Runs `f` on the named output (`-` is standard output), flushing at the end.
fn with_output<F>(out: &str, stdout: &mut dyn Write, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if out == "-" {
        f(stdout)?;
        stdout.flush()?;
        return Ok(());
    }
    let path = Path::new(out);
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn frame_reader<'a>(
    source: &str,
    format: Option<FrameFormat>,
    stdin: &'a mut dyn BufRead,
) -> Result<FrameReader<Box<dyn BufRead + 'a>>> {
    if source == "-" {
        return Ok(FrameReader::new(Box::new(stdin), format.unwrap_or(FrameFormat::Ndjson)));
    }
    let path = Path::new(source);
    let format = match format.or_else(|| FrameFormat::from_path(path)) {
        Some(f) => f,
        None => return Err(Error::Usage(format!("cannot tell the format of {source}; pass --input-format"))),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(FrameReader::new(Box::new(BufReader::new(file)), format))
}

fn read_frame_file(path: &Path) -> Result<Vec<Frame>> {
    let format = FrameFormat::from_path(path).unwrap_or(FrameFormat::Ndjson);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_frames(BufReader::new(file), format)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn simulate(cfg: &Config, out: &Path) -> Result<()> {
    let sim = cfg.sim();
    let s = &cfg.simulate;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let clusters = gen_labeled_dataset(s.n_human, s.n_clutter, cfg.seed_for(Stream::Clusters), &sim)?;
    let frames: Vec<Frame> =
        clusters.iter().enumerate().map(|(i, c)| Frame::new(i as u64, i as f64 * 0.1, c.points.clone())).collect();
    let labels: Vec<ObjectLabel> =
        clusters.iter().enumerate().map(|(i, c)| ObjectLabel { frame_id: i as u64, object_id: 0, label: c.label }).collect();
    write_to(&out.join(files::CLUSTERS), |w| write_frames(w, &frames, FrameFormat::Ndjson).map(drop))?;
    write_to(&out.join(files::LABELS), |w| write_labels(w, &labels).map(drop))?;

    let pool = gen_ground_pool(s.n_pool_scenes, cfg.seed_for(Stream::Pool), &sim)?;
    let pool_frame = Frame::new(0, 0.0, pool.rows.iter().map(|&r| Point3::from(r)).collect());
    write_to(&out.join(files::POOL), |w| write_frames(w, &[pool_frame], FrameFormat::Ndjson).map(drop))?;

    let scene_seed = cfg.seed_for(Stream::Scenes);
    let mut scenes = Vec::with_capacity(s.n_scenes);
    let mut scene_labels = Vec::new();
    for i in 0..s.n_scenes {
        let seed = derive_seed(scene_seed, i as u64);
        let n_humans = i % (s.max_humans + 1);
        let n_clutter = seeded(derive_seed(seed, 0)).gen_range(0..=s.max_clutter);
        let scene = gen_scene(n_humans, n_clutter, s.gap, derive_seed(seed, 1), &sim)?;
        let id = i as u64;
        scene_labels.extend(
            scene.truth.object_classes.iter().enumerate().map(|(j, &label)| ObjectLabel { frame_id: id, object_id: j, label }),
        );
        scenes.push(Frame::new(id, i as f64 * 0.1, scene.frame.points));
    }
    write_to(&out.join(files::SCENES), |w| write_frames(w, &scenes, FrameFormat::Ndjson).map(drop))?;
    write_to(&out.join(files::SCENE_LABELS), |w| write_labels(w, &scene_labels).map(drop))
}

fn write_to<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)?;
    finish(path, w)
}

fn cluster(cfg: &Config, reader: impl Iterator<Item = Result<Frame>>, w: &mut dyn Write) -> Result<()> {
    let roi = cfg.roi();
    let mut scores = Vec::new();
    let mut hist = ElbowHistogram::new(ELBOW_BIN_WIDTH)?;
    for frame in reader {
        let frame = frame?;
        let points = preprocess(&frame, &roi).points;
        let c = cluster_adaptive(&points, cfg.cluster.min_pts).map_err(|e| e.in_stage("cluster"))?;
        let score = if c.assignment.n_clusters >= 2 { Some(silhouette(&points, &c.assignment)?) } else { None };
        scores.push(score);
        match c.elbow {
            Some(e) => hist.add(e.epsilon),
            None => hist.n_missing += 1,
        }
        write_line(
            w,
            &ClusterFrameRecord {
                kind: "frame",
                frame_id: frame.frame_id,
                n_points: points.len(),
                epsilon: c.elbow.map(|e| e.epsilon),
                degenerate: c.elbow.is_some_and(|e| e.degenerate),
                n_clusters: c.assignment.n_clusters,
                n_noise: c.assignment.n_noise(),
                cluster_sizes: c.assignment.cluster_sizes(),
                silhouette: score,
                labels: c.assignment.labels,
            },
        )?;
    }
    let summary = SilhouetteSummary::from_scores(&scores);
    write_line(w, &ClusterSummaryRecord::new(scores.len(), &summary, hist.bin_width, hist.bins()))
}

/// Labeled simulated clusters and their ground pool.
pub struct SimData {
    pub clusters: Vec<Frame>,
    pub labels: Vec<usize>,
    pub pool: GroundPool,
}

pub fn load_sim_dir(dir: &Path) -> Result<SimData> {
    let clusters = read_frame_file(&dir.join(files::CLUSTERS))?;
    let labels_path = dir.join(files::LABELS);
    let file = File::open(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let by_frame: HashMap<u64, usize> = read_labels(BufReader::new(file))?
        .into_iter()
        .filter(|l| l.object_id == 0)
        .map(|l| (l.frame_id, l.label))
        .collect();
    let labels = clusters
        .iter()
        .map(|c| by_frame.get(&c.frame_id).copied().ok_or_else(|| Error::Data(format!("cluster {} has no label", c.frame_id))))
        .collect::<Result<Vec<_>>>()?;
    let pool_frames = read_frame_file(&dir.join(files::POOL))?;
    let pool = GroundPool::from_points(pool_frames.iter().map(|f| f.points.as_slice()))?;
    Ok(SimData { clusters, labels, pool })
}

/// Model inputs as the pipeline builds them: raw feature vectors for the
/// autoencoder, projection images for the CNN.
fn prepare_clusters(cfg: &Config, kind: ModelKind, clusters: &[Frame], pool: &GroundPool) -> Result<Vec<Vec<f64>>> {
    let pcfg = cfg.pipeline();
    clusters
        .iter()
        .map(|c| match kind {
            ModelKind::Autoencoder => Ok(cluster_features(&c.points, &pcfg.slice)?.0.to_vec()),
            _ => cluster_image(&c.points, pool, image_seed(pcfg.seed, c.frame_id, 0)),
        })
        .collect::<crowdcount_core::Result<_>>()
        .map_err(Error::from)
}

struct Prepared {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    /// The pool the inputs were built with, when known.
    pool: Option<GroundPool>,
}

/// Reads a `simulate` directory, a features CSV or an images NDJSON file.
/// `pool` replaces the directory's own pool when building CNN inputs.
fn prepare(cfg: &Config, data: &Path, kind: ModelKind, pool: Option<&GroundPool>) -> Result<Prepared> {
    if data.is_dir() {
        let sim = load_sim_dir(data)?;
        let pool = pool.cloned().unwrap_or(sim.pool);
        let inputs = prepare_clusters(cfg, kind, &sim.clusters, &pool)?;
        return Ok(Prepared { inputs, labels: sim.labels, pool: Some(pool) });
    }
    let file = File::open(data).map_err(|e| Error::io(data, e))?;
    let source = BufReader::new(file);
    match (FrameFormat::from_path(data), kind) {
        (Some(FrameFormat::Csv), ModelKind::Autoencoder) => {
            let (inputs, labels) = read_features(source)?.into_iter().map(|(v, l)| (v.0.to_vec(), l)).unzip();
            Ok(Prepared { inputs, labels, pool: None })
        }
        (Some(FrameFormat::Ndjson), ModelKind::Cnn2d) => {
            let (inputs, labels) = read_images(source)?.into_iter().unzip();
            Ok(Prepared { inputs, labels, pool: pool.cloned() })
        }
        _ => Err(Error::Usage(format!(
            "{} is not {} data (expected a simulate directory, features .csv or images .ndjson)",
            data.display(),
            kind.as_str()
        ))),
    }
}

fn select(cfg: &Config, p: &Prepared, split: Split) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let idx: Vec<usize> = match split {
        Split::All => (0..p.labels.len()).collect(),
        _ => {
            let (train, test) = stratified_split(&p.labels, cfg.split.test_fraction, cfg.seed_for(Stream::Split))?;
            if split == Split::Train {
                train
            } else {
                test
            }
        }
    };
    if idx.is_empty() {
        return Err(Error::Data(format!("the {} split is empty", split_name(split))));
    }
    Ok((idx.iter().map(|&i| p.inputs[i].clone()).collect(), idx.iter().map(|&i| p.labels[i]).collect()))
}

/// Inputs and labels of one split of `data`, built the way `evaluate` builds
/// them for the model in `file`.
pub fn load_split(cfg: &Config, data: &Path, file: &ModelFile, split: Split) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let p = prepare(cfg, data, file.model.kind(), file.ground_pool.as_ref())?;
    select(cfg, &p, split)
}

fn featurize(cfg: &Config, arch: Arch, data: &Path, out: &Path) -> Result<()> {
    let p = prepare(cfg, data, arch.kind(), None)?;
    write_to(out, |w| match arch {
        Arch::Autoencoder => {
            let rows = p
                .inputs
                .iter()
                .zip(&p.labels)
                .map(|(x, &l)| Ok((FeatureVector::from_slice(x)?, l)))
                .collect::<Result<Vec<_>>>()?;
            write_features(w, &rows).map(drop)
        }
        Arch::Cnn2d => {
            let rows: Vec<(Vec<f64>, usize)> = p.inputs.into_iter().zip(p.labels).collect();
            write_images(w, &rows).map(drop)
        }
    })
}

fn train(cfg: &Config, arch: Arch, data: &Path, out: &Path, pool_path: Option<&Path>, split: Split) -> Result<()> {
    let pool = match pool_path {
        Some(path) => {
            let frames = read_frame_file(path)?;
            Some(GroundPool::from_points(frames.iter().map(|f| f.points.as_slice()))?)
        }
        None => None,
    };
    let p = prepare(cfg, data, arch.kind(), pool.as_ref())?;
    let (inputs, labels) = select(cfg, &p, split)?;
    let tc = cfg.train_config();
    let (model, history) = match arch {
        Arch::Autoencoder => {
            let features = inputs.iter().map(|x| FeatureVector::from_slice(x)).collect::<crowdcount_core::Result<Vec<_>>>()?;
            train_autoencoder(&features, &labels, &tc)?
        }
        Arch::Cnn2d => train_cnn(&inputs, &labels, &tc)?,
    };
    let ground_pool = match arch {
        Arch::Autoencoder => None,
        Arch::Cnn2d => Some(p.pool.ok_or_else(|| Error::Usage("training a CNN from an images file needs --pool".into()))?),
    };
    let info = TrainInfo {
        epochs: tc.epochs,
        learning_rate: tc.learning_rate,
        batch_size: tc.batch_size,
        seed: tc.seed,
        n_samples: labels.len(),
        loss_history: history,
    };
    ModelFile { model: Model::Float(model), ground_pool, train: Some(info) }.save(out)
}

#[derive(serde::Serialize)]
struct QuantizeSummary {
    model: &'static str,
    representative: usize,
    float_bytes: usize,
    quantized_bytes: usize,
    ratio: f64,
}

fn quantize(cfg: &Config, file: &ModelFile, data: &Path, out: &Path) -> Result<QuantizeSummary> {
    let Model::Float(model) = &file.model else {
        return Err(Error::Usage("the model is already quantized".into()));
    };
    let (inputs, _) = load_split(cfg, data, file, Split::Train)?;
    let n = cfg.quantize.representative.min(inputs.len());
    let representative: Vec<Vec<f64>> = inputs[..n]
        .iter()
        .map(|x| match model.spec.kind {
            ModelKind::Autoencoder => Ok(autoencoder_input(model, &FeatureVector::from_slice(x)?)),
            _ => Ok(x.clone()),
        })
        .collect::<crowdcount_core::Result<_>>()?;
    let q = quantize_model(model, &representative)?;
    let summary = QuantizeSummary {
        model: model.spec.kind.as_str(),
        representative: n,
        float_bytes: model.model_size(),
        quantized_bytes: q.model_size(),
        ratio: q.model_size() as f64 / model.model_size() as f64,
    };
    ModelFile { model: Model::Quantized(q), ground_pool: file.ground_pool.clone(), train: file.train.clone() }.save(out)?;
    Ok(summary)
}

fn count(
    cfg: &Config,
    file: &ModelFile,
    reader: impl Iterator<Item = Result<Frame>>,
    w: &mut dyn Write,
    format: ReportFormat,
) -> Result<()> {
    let pcfg = cfg.pipeline();
    if file.model.kind() == ModelKind::Cnn2d && file.ground_pool.is_none() {
        return Err(Error::Model("CNN model file carries no ground pool".into()));
    }
    if format == ReportFormat::Table {
        writeln!(w, "{}", CountRecord::TABLE_HEADER)?;
    }
    for frame in reader {
        let report = count_people(&frame?, &file.model, &pcfg, file.ground_pool.as_ref())?;
        let record = CountRecord::from(&report);
        match format {
            ReportFormat::Json => write_line(w, &record)?,
            ReportFormat::Table => writeln!(w, "{}", record.table_row())?,
        }
        // One report per frame as soon as it is ready.
        w.flush()?;
    }
    Ok(())
}

fn read_log_file(path: &Path) -> Result<crate::temps::ParsedLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_log(BufReader::new(file))
}

fn temps(pole: &Path, weather: Option<&Path>, w: &mut dyn Write, format: ReportFormat) -> Result<()> {
    let log = read_log_file(pole)?;
    if log.samples.is_empty() {
        return Err(Error::Data(format!("{} has no readable samples", pole.display())));
    }
    let series = TemperatureSeries::new(log.samples)?;
    let hourly = series.hourly();
    let weather = weather.map(read_log_file).transpose()?;
    let diff = weather.as_ref().map(|wlog| hourly_difference(&hourly, &wlog.samples));
    let stats = TempStatsRecord::new(
        &series.stats(),
        log.skipped.len(),
        series.n_duplicates,
        weather.as_ref().map(|l| l.skipped.len()),
    );
    match format {
        ReportFormat::Json => {
            write_line(w, &stats)?;
            for h in &hourly {
                write_line(w, &HourlyRecord { kind: "hourly", hour: format_timestamp(h.hour), celsius: h.mean, count: Some(h.count) })?;
            }
            for &(hour, d) in diff.iter().flatten() {
                write_line(w, &HourlyRecord { kind: "difference", hour: format_timestamp(hour), celsius: d, count: None })?;
            }
        }
        ReportFormat::Table => {
            writeln!(w, "samples  {}  (skipped {}, duplicate timestamps {})", stats.count, stats.skipped_rows, stats.duplicate_timestamps)?;
            writeln!(w, "max      {:.2} C\nmin      {:.2} C\nmean     {:.2} C\n", stats.max, stats.min, stats.mean)?;
            let by_hour: HashMap<i64, f64> = diff.into_iter().flatten().collect();
            writeln!(w, "hour                   pole_mean  n  pole_minus_weather")?;
            for h in &hourly {
                let d = by_hour.get(&h.hour).map_or(String::from("-"), |d| format!("{d:.2}"));
                writeln!(w, "{}  {:>9.2}  {:>2}  {d:>18}", format_timestamp(h.hour), h.mean, h.count)?;
            }
        }
    }
    Ok(())
}
