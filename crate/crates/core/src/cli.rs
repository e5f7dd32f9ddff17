//! Command-line front end: data generation, training phases, evaluation,
//! prediction, OBJ export, parameter summary and latency benchmarking.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::codec::FULL_RESOLUTION;
use crate::dataset::{
    build_dataset, build_subregion_store, gen_primitive, generate_shapes, BuildConfig,
    DatasetError, PrimitiveParams, SampleStore, ShapeKind,
};
use crate::geometry::{
    normalize_mesh, render_depth, DepthMap, GeometryError, Viewpoint, VoxelGrid,
    DEFAULT_DEPTH_SIZE, DEFAULT_ELEVATION_DEG,
};
use crate::metrics::{evaluate, iou, voxel_accuracy, MetricsError, DEFAULT_THRESHOLD};
use crate::nn::LayerSpec;
use crate::training::{
    depth_batch, finetune_with_hook, train_autoencoder_with_hook, train_completion_with_hook,
    train_low_res, Checkpoint, EpochRecord, LossKind, ModelVariant, TrainConfig, TrainError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const BENCH_WARMUP: usize = 3;
pub const MIN_BENCH_REPETITIONS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "depthvox", version, about = "Single-view voxel shape completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate procedural shapes and write a sample store.
    GenData(GenDataArgs),
    /// Train the block auto-encoder on the sub-regions of a store.
    TrainAe(TrainAeArgs),
    /// Train the stacked 30^3 completion model.
    Train(TrainArgs),
    /// Train the direct 10^3 model.
    TrainLowres(TrainLowresArgs),
    /// Continue a completion checkpoint on another store.
    Finetune(FinetuneArgs),
    /// Evaluate a completion checkpoint on a store.
    Eval(EvalArgs),
    /// Predict occupancy probabilities for one record of a store.
    Predict(PredictArgs),
    /// Export a grid as an OBJ mesh of voxel cubes.
    Export(ExportArgs),
    /// Print the layer table and parameter count of a model.
    Summary(SummaryArgs),
    /// Time single depth-map reconstructions.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Bce,
    SquaredError,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Bce => LossKind::WeightedBce,
            LossArg::SquaredError => LossKind::WeightedSquaredError,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 500)]
    pub epochs: u32,
    #[arg(long = "lr", default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = crate::training::DEFAULT_RAMP_EPOCHS)]
    pub ramp_epochs: u32,
    #[arg(long, default_value_t = crate::training::DEFAULT_S_MIN)]
    pub s_min: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Bce)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print a loss line every this many epochs.
    #[arg(long, default_value_t = 10)]
    pub log_every: u32,
}

impl OptimArgs {
    fn config(&self, variant: ModelVariant, freeze_epochs: u32) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            freeze_epochs,
            ramp_epochs: self.ramp_epochs,
            s_min: self.s_min,
            loss: self.loss.into(),
            variant,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Comma-separated shape kinds, e.g. `box,icosphere,table`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub classes: Vec<ShapeKind>,
    #[arg(long, default_value_t = 5)]
    pub per_class: usize,
    #[arg(long, default_value_t = 8)]
    pub views: usize,
    #[arg(long, default_value_t = FULL_RESOLUTION)]
    pub res: usize,
    #[arg(long, default_value_t = DEFAULT_DEPTH_SIZE)]
    pub depth_size: usize,
    #[arg(long, default_value_t = DEFAULT_ELEVATION_DEG)]
    pub elevation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainAeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Class ids whose records are left out of the block set.
    #[arg(long, value_delimiter = ',')]
    pub exclude_class: Vec<u16>,
    /// Keep only the first N blocks.
    #[arg(long)]
    pub max_blocks: Option<usize>,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ae: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::training::DEFAULT_FREEZE_EPOCHS)]
    pub freeze_epochs: u32,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainLowresArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Absolute epoch from which the decoder may change.
    #[arg(long, default_value_t = crate::training::DEFAULT_FREEZE_EPOCHS)]
    pub freeze_epochs: u32,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
    /// Probabilities in grid order, one per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Probability file written by `predict`.
    #[arg(long, conflicts_with_all = ["data", "index"], required_unless_present = "data")]
    pub probs: Option<PathBuf>,
    /// Store whose ground-truth target is exported.
    #[arg(long, requires = "index")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SummaryArgs {
    #[arg(long, conflicts_with = "model", default_value = "high_res_stacked")]
    pub variant: ModelVariant,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    /// Seed of the synthetic shape whose depth map is reconstructed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv).map(|c| c.command)
}

/// Parses, runs and maps the outcome to the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = match parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match run(&cmd, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn run(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    match cmd {
        Command::GenData(a) => gen_data(a, &mut text)?,
        Command::TrainAe(a) => train_ae(a, out)?,
        Command::Train(a) => train(a, out)?,
        Command::TrainLowres(a) => train_lowres(a, &mut text)?,
        Command::Finetune(a) => finetune_cmd(a, out)?,
        Command::Eval(a) => {
            let model = Checkpoint::load(&a.model)?.model()?;
            let store = SampleStore::load(&a.data)?;
            text = evaluate(&model, &store, a.threshold)?.to_text();
        }
        Command::Predict(a) => predict(a, &mut text)?,
        Command::Export(a) => export(a, &mut text)?,
        Command::Summary(a) => summary(a, &mut text)?,
        Command::Bench(a) => text = bench(a)?.to_text(),
    }
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

fn gen_data(a: &GenDataArgs, text: &mut String) -> Result<(), CliError> {
    if a.per_class == 0 {
        return Err(CliError::Argument("--per-class must be positive".into()));
    }
    let meshes = generate_shapes(&a.classes, a.per_class, &PrimitiveParams::default(), a.seed)?;
    let cfg = BuildConfig {
        n_views: a.views,
        resolution: a.res,
        depth_size: a.depth_size,
        elevation_deg: a.elevation,
    };
    let (store, report) = build_dataset(&meshes, &cfg, a.seed)?;
    store.save(&a.out)?;
    let _ = writeln!(text, "records {}", store.len());
    let _ = writeln!(text, "skipped {}", report.skipped);
    Ok(())
}

fn logger<'a>(out: &'a mut dyn Write, every: u32) -> impl FnMut(&EpochRecord) + 'a {
    move |r| {
        if every > 0 && (r.epoch + 1) % every == 0 {
            let _ = writeln!(out, "epoch {} loss {:.6}", r.epoch, r.loss);
        }
    }
}

fn train_ae(a: &TrainAeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut store = SampleStore::load(&a.data)?;
    store.records.retain(|r| !a.exclude_class.contains(&r.class_id));
    let mut blocks = build_subregion_store(&store)?;
    if let Some(n) = a.max_blocks {
        blocks.blocks.truncate(n);
    }
    let cfg = a.optim.config(ModelVariant::AutoEncoder, 0);
    let mut log = logger(out, a.optim.log_every);
    let (ckpt, _) = train_autoencoder_with_hook(&blocks, &cfg, &mut |r, _| log(r))?;
    ckpt.save(&a.out)?;
    Ok(())
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = SampleStore::load(&a.data)?;
    let ae = Checkpoint::load(&a.ae)?.autoencoder()?;
    let cfg = a.optim.config(ModelVariant::HighResStacked, a.freeze_epochs);
    let mut log = logger(out, a.optim.log_every);
    let (ckpt, _) = train_completion_with_hook(&store, &ae, &cfg, &mut |r, _| log(r))?;
    ckpt.save(&a.out)?;
    Ok(())
}

fn train_lowres(a: &TrainLowresArgs, text: &mut String) -> Result<(), CliError> {
    let store = SampleStore::load(&a.data)?;
    let cfg = a.optim.config(ModelVariant::LowResDirect, 0);
    let (ckpt, history) = train_low_res(&store, &cfg)?;
    ckpt.save(&a.out)?;
    let every = a.optim.log_every;
    for r in history.epochs.iter().filter(|r| every > 0 && (r.epoch + 1) % every == 0) {
        let _ = writeln!(text, "epoch {} loss {:.6}", r.epoch, r.loss);
    }
    Ok(())
}

fn finetune_cmd(a: &FinetuneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&a.model)?;
    let store = SampleStore::load(&a.data)?;
    let cfg = a.optim.config(ckpt.variant, a.freeze_epochs);
    let mut log = logger(out, a.optim.log_every);
    let (ckpt, _) = finetune_with_hook(ckpt, &store, &cfg, &mut |r, _| log(r))?;
    ckpt.save(&a.out)?;
    Ok(())
}

fn record(store: &SampleStore, index: usize) -> Result<&crate::dataset::Sample, CliError> {
    store.records.get(index).ok_or_else(|| {
        CliError::Argument(format!("index {index} out of range for {} records", store.len()))
    })
}

fn predict(a: &PredictArgs, text: &mut String) -> Result<(), CliError> {
    let model = Checkpoint::load(&a.model)?.model()?;
    let store = SampleStore::load(&a.data)?;
    let rec = record(&store, a.index)?;
    let probs = model.predict(&rec.depth)?;
    let mut body = String::with_capacity(probs.len() * 10);
    for p in &probs {
        let _ = writeln!(body, "{p}");
    }
    std::fs::write(&a.out, body).map_err(io_err(&a.out))?;
    if rec.target.len() == probs.len() {
        let _ = writeln!(text, "accuracy {:.6}", voxel_accuracy(&probs, &rec.target, a.threshold)?);
        let _ = writeln!(text, "iou {:.6}", iou(&probs, &rec.target, a.threshold)?);
    }
    Ok(())
}

/// Reads a probability file and thresholds it into a cubic grid.
pub fn read_probabilities(path: &Path, threshold: f32) -> Result<VoxelGrid, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut occ = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let p: f32 = line.parse().map_err(|_| {
            CliError::Argument(format!("{}:{}: not a number: `{line}`", path.display(), n + 1))
        })?;
        occ.push(p > threshold);
    }
    let r = (occ.len() as f64).cbrt().round() as usize;
    if r == 0 || r.pow(3) != occ.len() {
        return Err(CliError::Argument(format!(
            "{}: {} values is not a cubic grid",
            path.display(),
            occ.len()
        )));
    }
    Ok(VoxelGrid::from_occupancy(r, occ)?)
}

fn export(a: &ExportArgs, text: &mut String) -> Result<(), CliError> {
    let grid = match (&a.probs, &a.data, a.index) {
        (Some(p), _, _) => read_probabilities(p, a.threshold)?,
        (None, Some(d), Some(i)) => record(&SampleStore::load(d)?, i)?.target.clone(),
        _ => return Err(CliError::Argument("give --probs or --data with --index".into())),
    };
    let file = File::create(&a.out).map_err(io_err(&a.out))?;
    let mut w = BufWriter::new(file);
    write_obj(&grid, &mut w).map_err(io_err(&a.out))?;
    w.flush().map_err(io_err(&a.out))?;
    let _ = writeln!(text, "voxels {}", grid.occupied_count());
    let _ = writeln!(text, "faces {}", 12 * grid.occupied_count());
    Ok(())
}

// Corner c of a cube sits at (c & 1, c >> 1 & 1, c >> 2 & 1); faces wind outward.
const CUBE_FACES: [[usize; 3]; 12] = [
    [0, 4, 6],
    [0, 6, 2],
    [1, 3, 7],
    [1, 7, 5],
    [0, 1, 5],
    [0, 5, 4],
    [2, 6, 7],
    [2, 7, 3],
    [0, 2, 3],
    [0, 3, 1],
    [4, 5, 7],
    [4, 7, 6],
];

/// One axis-aligned cube (8 vertices, 12 triangles) per occupied voxel, in grid order.
pub fn write_obj(grid: &VoxelGrid, w: &mut impl Write) -> std::io::Result<()> {
    let r = grid.resolution();
    writeln!(w, "# {} occupied voxels at resolution {r}", grid.occupied_count())?;
    let mut base = 1;
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                if !grid.get(i, j, k) {
                    continue;
                }
                let (bx, by, bz) = (grid.cell_bounds(i), grid.cell_bounds(j), grid.cell_bounds(k));
                for c in 0..8 {
                    let x = if c & 1 == 0 { bx.0 } else { bx.1 };
                    let y = if c & 2 == 0 { by.0 } else { by.1 };
                    let z = if c & 4 == 0 { bz.0 } else { bz.1 };
                    writeln!(w, "v {x} {y} {z}")?;
                }
                for f in CUBE_FACES {
                    writeln!(w, "f {} {} {}", base + f[0], base + f[1], base + f[2])?;
                }
                base += 8;
            }
        }
    }
    Ok(())
}

fn summary(a: &SummaryArgs, text: &mut String) -> Result<(), CliError> {
    let (variant, net) = match &a.model {
        Some(p) => {
            let c = Checkpoint::load(p)?;
            (c.variant, c.network)
        }
        None => (
            a.variant,
            a.variant.builder().build_zeroed::<f32>().map_err(TrainError::from)?,
        ),
    };
    let _ = writeln!(text, "variant {variant}");
    let _ = writeln!(text, "input {:?}", net.input_shape());
    let mut groups = net.params().groups().iter();
    for (spec, shape) in net.layer_shapes() {
        let params = match spec {
            LayerSpec::Conv2d(_) | LayerSpec::FullyConnected { .. } => {
                let g = groups.next().expect("one group per parameterised layer");
                format!("{} {}", g.name, g.numel())
            }
            _ => "- 0".into(),
        };
        let _ = writeln!(text, "layer {} {params} {shape:?}", spec.kind_name());
    }
    let _ = writeln!(text, "param_count {}", net.param_count());
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Median time per stage, in pipeline order.
    pub stages: Vec<(&'static str, f64)>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("median_ms {:.3}\np95_ms {:.3}\n", self.median_ms, self.p95_ms);
        for (name, ms) in &self.stages {
            let _ = writeln!(s, "stage.{name}_ms {ms:.3}");
        }
        s
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Depth map of a normalised procedural box, used as the benchmark input.
pub fn bench_input(seed: u64) -> Result<DepthMap, CliError> {
    let mesh = gen_primitive(ShapeKind::Box, &PrimitiveParams::default(), seed)?;
    let mesh = normalize_mesh(&mesh)?;
    Ok(render_depth(
        &mesh,
        &Viewpoint::new(0.0, DEFAULT_ELEVATION_DEG),
        DEFAULT_DEPTH_SIZE,
    )?)
}

pub fn bench(a: &BenchArgs) -> Result<BenchReport, CliError> {
    if a.repetitions < MIN_BENCH_REPETITIONS {
        return Err(CliError::Argument(format!(
            "--repetitions must be at least {MIN_BENCH_REPETITIONS}"
        )));
    }
    let model = Checkpoint::load(&a.model)?.model()?;
    let depth = bench_input(a.seed)?;
    let mut stage_times = [Vec::new(), Vec::new(), Vec::new()];
    let mut totals = Vec::with_capacity(a.repetitions);
    for rep in 0..BENCH_WARMUP + a.repetitions {
        let t0 = Instant::now();
        let x = depth_batch(&[&depth])?;
        let t1 = Instant::now();
        let y = model.network().forward(&x).map_err(TrainError::from)?;
        let t2 = Instant::now();
        let grid = match model.variant() {
            ModelVariant::HighResStacked => crate::codec::to_grid_order(y.data()),
            _ => y.into_data(),
        };
        let t3 = Instant::now();
        std::hint::black_box(&grid);
        if rep >= BENCH_WARMUP {
            let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
            stage_times[0].push(ms(t0, t1));
            stage_times[1].push(ms(t1, t2));
            stage_times[2].push(ms(t2, t3));
            totals.push(ms(t0, t3));
        }
    }
    totals.sort_by(f64::total_cmp);
    let names = ["prepare", "network", "reorder"];
    let stages = names
        .into_iter()
        .zip(stage_times)
        .map(|(n, mut v)| {
            v.sort_by(f64::total_cmp);
            (n, percentile(&v, 0.5))
        })
        .collect();
    Ok(BenchReport {
        median_ms: percentile(&totals, 0.5),
        p95_ms: percentile(&totals, 0.95),
        stages,
    })
}
