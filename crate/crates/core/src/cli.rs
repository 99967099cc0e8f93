//! Command-line front end.
//!
//! Settings resolve as built-in defaults, then a TOML config file, then
//! flags. Every command prints the resolved settings before running and
//! writes them, with the seed and crate version, to a `run.meta` file next to
//! its artifacts. Exit codes: 0 success, 1 usage or config error, 2 runtime
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cnn::{evaluate, format_history_csv, read_checkpoint, write_checkpoint, Activation, CnnConfig, Evaluation, Init};
use crate::embed::{embed_graph, read_points, write_embedding, write_points, SgnsConfig};
use crate::error::Error;
use crate::experiments::{
    build_synthetic_dataset, format_grid_csv, format_robustness_csv, ingest_labeled_networks, map_activations,
    parse_manifest, pipeline_sample, render_overlay, run_experiment, run_size_robustness, run_trade, run_ws_grid,
    DatasetSample, ExperimentSpec, Generator, Profile, Provenance, SplitRatios, SweepAxis,
};
use crate::graph::{read_edge_list, write_edge_list};
use crate::raster::{rasterize_with, write_levels_pgm, write_pgm, Intensity, DEFAULT_GRID};
use crate::rng::{stage, RngStream};
use crate::walker::{WalkConfig, WeightTransform};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "netclass", version, about = "Classify whole networks by rasterizing node embeddings and running a small CNN")]
pub struct Cli {
    /// Worker threads for parallel sections; 1 selects the sequential
    /// reference mode.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one BA or WS network and write it as an edge list.
    Generate(GenerateArgs),
    /// Walks, SGNS and PCA for one edge list; writes 2D node points.
    Embed(EmbedArgs),
    /// Bin a points file into a grayscale PGM raster.
    Rasterize(RasterizeArgs),
    /// Build a synthetic dataset, train a CNN and save the checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a rebuilt dataset split or a manifest.
    Evaluate(EvaluateArgs),
    /// Canned experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Map layer-1 feature maps of a checkpoint back onto a network's nodes.
    VisualizeActivations(VisualizeArgs),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// BA against WS classification.
    BaWs(BaWsArgs),
    /// Pairwise WS classification over rewiring probabilities.
    WsGrid(WsGridArgs),
    /// Train at one network size, evaluate at others.
    Robustness(RobustnessArgs),
    /// Train and test on labeled networks listed in a manifest.
    Trade(TradeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ba,
    Ws,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML with any of `seed`, `model`, `n`, `m`, `k`, `p`.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub n: Option<usize>,
    /// BA edges per new node.
    #[arg(long)]
    pub m: Option<usize>,
    /// WS lattice degree (even).
    #[arg(long)]
    pub k: Option<usize>,
    /// WS rewiring probability.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output edge list; metadata goes to `<out>.run.meta`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSettings {
    pub seed: u64,
    pub model: ModelKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub p: f64,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        GenerateSettings { seed: 0, model: ModelKind::Ba, n: 200, m: 4, k: 8, p: 0.1 }
    }
}

impl GenerateSettings {
    pub fn generator(&self) -> Generator {
        match self.model {
            ModelKind::Ba => Generator::Ba { n: self.n, m: self.m },
            ModelKind::Ws => Generator::Ws { n: self.n, k: self.k, p: self.p },
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// TOML with `seed`, `directed` and `[walk]` / `[sgns]` tables.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Edge list (`src,dst[,weight]` per line).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Output points file (`n 2` header, one `x y` row per node).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the center vectors in the same matrix format.
    #[arg(long, value_name = "FILE")]
    pub embedding_out: Option<PathBuf>,
    #[arg(long)]
    pub directed: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_walks: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub weight_transform: Option<WeightTransformArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightTransformArg {
    Raw,
    Log1p,
}

impl From<WeightTransformArg> for WeightTransform {
    fn from(w: WeightTransformArg) -> Self {
        match w {
            WeightTransformArg::Raw => WeightTransform::Raw,
            WeightTransformArg::Log1p => WeightTransform::Log1p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedSettings {
    pub seed: u64,
    pub directed: bool,
    pub walk: WalkConfig,
    pub sgns: SgnsConfig,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    /// TOML with `grid` and `intensity`.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Points file written by `embed`.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Output PGM.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub intensity: Option<IntensityArg>,
    /// Write plain (P2) instead of binary (P5) PGM.
    #[arg(long)]
    pub plain: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntensityArg {
    Max,
    Log,
}

impl From<IntensityArg> for Intensity {
    fn from(i: IntensityArg) -> Self {
        match i {
            IntensityArg::Max => Intensity::Max,
            IntensityArg::Log => Intensity::Log,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterSettings {
    pub grid: usize,
    pub intensity: Intensity,
}

impl Default for RasterSettings {
    fn default() -> Self {
        RasterSettings { grid: DEFAULT_GRID, intensity: Intensity::Max }
    }
}

/// Experiment spec source plus the overrides shared by every spec-driven
/// command.
#[derive(Debug, Args)]
pub struct SpecArgs {
    /// Experiment spec (TOML); replaces the profile defaults.
    #[arg(long, value_name = "FILE", conflicts_with = "profile")]
    pub config: Option<PathBuf>,
    /// Built-in scale when no config file is given [default: desk].
    #[arg(long, value_parser = parse_profile)]
    pub profile: Option<Profile>,
    /// Master seed; also seeds CNN initialisation and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub init: Option<InitArg>,
    /// Per-sample gradients of a batch on the thread pool (same result as
    /// sequential).
    #[arg(long)]
    pub data_parallel: bool,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Glorot,
    He,
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Directory for results, history, checkpoint and run.meta.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint written by `train` or an experiment.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Evaluate every network of this manifest instead of a synthetic split.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Split of the rebuilt synthetic dataset.
    #[arg(long, default_value = "test")]
    pub split: SplitArg,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct BaWsArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct WsGridArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
    /// Rewiring probabilities [default: 0, 0.1, ..., 1].
    #[arg(long, value_delimiter = ',')]
    pub p_values: Option<Vec<f64>>,
    /// p values that also get a same-distribution control cell [default:
    /// 0.1 when it is in the grid].
    #[arg(long, value_delimiter = ',')]
    pub controls: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
    /// Evaluate this checkpoint instead of training one on the spec.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Node counts to test at.
    #[arg(long, value_delimiter = ',', default_value = "150,200,250")]
    pub nodes: Vec<usize>,
    /// BA `m` values to test at (WS uses `k = 2m`); empty skips the sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    pub half_degrees: Vec<usize>,
    /// Fresh test networks per class and axis value.
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
}

#[derive(Debug, Args)]
pub struct TradeArgs {
    /// Manifest of `path,label,directed(0|1)` lines.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Edge list of the network to inspect.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long)]
    pub directed: bool,
    /// Layer-1 filter; all filters when omitted.
    #[arg(long)]
    pub filter: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub quantile: f64,
    /// Output pixels per raster bin.
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutDir,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; the message is followed by the command synopsis.
    Usage { message: String, command: Vec<&'static str> },
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(command: &[&'static str], message: impl Into<String>) -> CliError {
    CliError::Usage { message: message.into(), command: command.to_vec() }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli, &args) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage { message, command }) => {
            eprintln!("error: {message}\n");
            eprintln!("{}", synopsis(&command));
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn synopsis(path: &[&str]) -> String {
    fn descend(cmd: &mut clap::Command, path: &[&str]) -> String {
        match path.split_first() {
            Some((name, rest)) if cmd.find_subcommand(name).is_some() => {
                descend(cmd.find_subcommand_mut(name).unwrap(), rest)
            }
            _ => cmd.render_usage().to_string(),
        }
    }
    let mut cmd = Cli::command();
    cmd.build();
    descend(&mut cmd, path)
}

pub fn dispatch(cli: &Cli, argv: &[String]) -> CliResult<()> {
    let ctx = Ctx { threads: cli.threads, argv };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage(&[], "--threads must be at least 1"));
        }
        // A second call (tests running several commands in one process) keeps
        // the first pool.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("rayon pool already initialised");
        }
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Embed(a) => cmd_embed(&ctx, a),
        Command::Rasterize(a) => cmd_rasterize(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Experiment(ExperimentCommand::BaWs(a)) => cmd_ba_ws(&ctx, a),
        Command::Experiment(ExperimentCommand::WsGrid(a)) => cmd_ws_grid(&ctx, a),
        Command::Experiment(ExperimentCommand::Robustness(a)) => cmd_robustness(&ctx, a),
        Command::Experiment(ExperimentCommand::Trade(a)) => cmd_trade(&ctx, a),
        Command::VisualizeActivations(a) => cmd_visualize(&ctx, a),
    }
}

struct Ctx<'a> {
    threads: Option<usize>,
    argv: &'a [String],
}

impl Ctx<'_> {
    fn sequential(&self) -> bool {
        self.threads == Some(1)
    }
}

#[derive(Serialize)]
struct RunMeta<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    threads: Option<usize>,
    argv: &'a [String],
    config: &'a T,
}

/// Prints the resolved settings and returns the `run.meta` text.
fn announce<T: Serialize>(ctx: &Ctx, command: &str, seed: Option<u64>, config: &T) -> CliResult<String> {
    let meta = RunMeta { command, version: env!("CARGO_PKG_VERSION"), seed, threads: ctx.threads, argv: ctx.argv, config };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(format!("serializing settings: {e}")))?;
    match seed {
        Some(s) => println!("# {command}, seed {s}"),
        None => println!("# {command}"),
    }
    println!("{text}");
    Ok(text)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e).into())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e).into())
}

fn sidecar_meta(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".run.meta");
    out.with_file_name(name)
}

/// Reads a TOML settings file. Missing or malformed files are usage errors.
fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path, command: &[&'static str]) -> CliResult<T> {
    if !path.is_file() {
        return Err(usage(command, format!("config file {} not found", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| usage(command, format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(command, format!("{}: {e}", path.display())))
}

impl SpecArgs {
    /// Profile or config file, then flag overrides. Validation is left to
    /// the caller since manifest runs do not need a class list.
    fn resolve(&self, ctx: &Ctx, command: &[&'static str]) -> CliResult<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => load_toml::<ExperimentSpec>(path, command)?,
            None => ExperimentSpec::ba_ws(self.profile.unwrap_or(Profile::Desk), self.seed.unwrap_or(0)),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
            spec.cnn.seed = seed;
        }
        let cnn = &mut spec.cnn;
        cnn.epochs = self.epochs.unwrap_or(cnn.epochs);
        cnn.patience = self.patience.unwrap_or(cnn.patience);
        cnn.lr = self.lr.unwrap_or(cnn.lr);
        cnn.batch = self.batch.unwrap_or(cnn.batch);
        if let Some(a) = self.activation {
            cnn.activation = match a {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::Tanh => Activation::Tanh,
            };
        }
        if let Some(i) = self.init {
            cnn.init = match i {
                InitArg::Glorot => Init::Glorot,
                InitArg::He => Init::He,
            };
        }
        cnn.data_parallel = (cnn.data_parallel || self.data_parallel) && !ctx.sequential();
        Ok(spec)
    }

    fn resolve_valid(&self, ctx: &Ctx, command: &[&'static str]) -> CliResult<ExperimentSpec> {
        let spec = self.resolve(ctx, command)?;
        spec.validate().map_err(|e| usage(command, e.to_string()))?;
        Ok(spec)
    }
}

fn cmd_generate(ctx: &Ctx, a: &GenerateArgs) -> CliResult<()> {
    const CMD: &[&str] = &["generate"];
    let mut s: GenerateSettings = match &a.config {
        Some(p) => load_toml(p, CMD)?,
        None => GenerateSettings::default(),
    };
    s.seed = a.seed.unwrap_or(s.seed);
    s.model = a.model.unwrap_or(s.model);
    s.n = a.n.unwrap_or(s.n);
    s.m = a.m.unwrap_or(s.m);
    s.k = a.k.unwrap_or(s.k);
    s.p = a.p.unwrap_or(s.p);
    let generator = s.generator();
    generator.validate().map_err(|e| usage(CMD, e.to_string()))?;
    let meta = announce(ctx, "generate", Some(s.seed), &s)?;
    let graph = generator.generate(&mut RngStream::new(s.seed, stage::GENERATE))?;
    write_edge_list(&graph, &a.out)?;
    write_text(&sidecar_meta(&a.out), &meta)?;
    eprintln!("wrote {} edges to {}", graph.edge_count(), a.out.display());
    Ok(())
}

fn cmd_embed(ctx: &Ctx, a: &EmbedArgs) -> CliResult<()> {
    const CMD: &[&str] = &["embed"];
    let mut s: EmbedSettings = match &a.config {
        Some(p) => load_toml(p, CMD)?,
        None => EmbedSettings::default(),
    };
    s.seed = a.seed.unwrap_or(s.seed);
    s.directed |= a.directed;
    s.walk.num_walks = a.num_walks.unwrap_or(s.walk.num_walks);
    s.walk.walk_length = a.walk_length.unwrap_or(s.walk.walk_length);
    s.sgns.dim = a.dim.unwrap_or(s.sgns.dim);
    if let Some(w) = a.weight_transform {
        s.walk.weight_transform = w.into();
    }
    s.walk.validate().and_then(|_| s.sgns.validate()).map_err(|e| usage(CMD, e.to_string()))?;
    let meta = announce(ctx, "embed", Some(s.seed), &s)?;
    let (graph, report) = read_edge_list(&a.input, s.directed)?;
    log::info!("{}: {} nodes, {} edges, {report:?}", a.input.display(), graph.node_count(), graph.edge_count());
    let out = embed_graph(&graph, &s.walk, &s.sgns, &RngStream::new(s.seed, stage::CLASS))?;
    write_points(&out.points, &a.out)?;
    if let Some(path) = &a.embedding_out {
        write_embedding(&out.embedding, path)?;
    }
    write_text(&sidecar_meta(&a.out), &meta)?;
    let loss = out.report.epoch_loss.last().copied().unwrap_or(f64::NAN);
    eprintln!("wrote {} points to {} (final SGNS loss {loss:.4})", out.points.len(), a.out.display());
    Ok(())
}

fn cmd_rasterize(ctx: &Ctx, a: &RasterizeArgs) -> CliResult<()> {
    const CMD: &[&str] = &["rasterize"];
    let mut s: RasterSettings = match &a.config {
        Some(p) => load_toml(p, CMD)?,
        None => RasterSettings::default(),
    };
    s.grid = a.grid.unwrap_or(s.grid);
    if let Some(i) = a.intensity {
        s.intensity = i.into();
    }
    if s.grid < 2 {
        return Err(usage(CMD, format!("grid must be at least 2, got {}", s.grid)));
    }
    let meta = announce(ctx, "rasterize", None, &s)?;
    let points = read_points(&a.input)?;
    let image = rasterize_with(&points, s.grid, s.intensity)?;
    write_pgm(&image, &a.out, a.plain)?;
    write_text(&sidecar_meta(&a.out), &meta)?;
    eprintln!("wrote {}x{} raster of {} points to {}", s.grid, s.grid, image.total_count(), a.out.display());
    Ok(())
}

fn results_csv(rows: &[(&str, &Evaluation)]) -> String {
    let mut out = String::from("split,n,error_rate,confusion\n");
    for (name, e) in rows {
        let confusion: Vec<String> = e.confusion.iter().map(|r| r.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")).collect();
        writeln!(out, "{name},{},{},{}", e.total(), e.error_rate, confusion.join(";")).unwrap();
    }
    out
}

/// Trains on a synthetic spec and writes checkpoint, history, results and
/// metadata to `dir`.
fn train_to_dir(ctx: &Ctx, name: &str, spec: &ExperimentSpec, dir: &Path) -> CliResult<()> {
    let meta = announce(ctx, name, Some(spec.seed), spec)?;
    create_dir(dir)?;
    write_text(&dir.join("run.meta"), &meta)?;
    let (data, run) = run_experiment(spec)?;
    let [n_train, n_val, n_test] = data.sizes();
    log::info!("dataset sizes train {n_train}, val {n_val}, test {n_test}");
    write_checkpoint(&run.model, &dir.join("model.ckpt"))?;
    write_text(&dir.join("history.csv"), &format_history_csv(&run.history))?;
    write_text(&dir.join("results.csv"), &results_csv(&[("test", &run.test)]))?;
    println!("test error {:.4} over {n_test} networks", run.test.error_rate);
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> CliResult<()> {
    let spec = a.spec.resolve_valid(ctx, &["train"])?;
    train_to_dir(ctx, "train", &spec, &a.out.out_dir)
}

fn cmd_ba_ws(ctx: &Ctx, a: &BaWsArgs) -> CliResult<()> {
    let spec = a.spec.resolve_valid(ctx, &["experiment", "ba-ws"])?;
    train_to_dir(ctx, "experiment ba-ws", &spec, &a.out.out_dir)
}

fn load_model(path: &Path, command: &[&'static str]) -> CliResult<crate::cnn::CnnModel> {
    if !path.is_file() {
        return Err(usage(command, format!("checkpoint {} not found", path.display())));
    }
    Ok(read_checkpoint(path)?)
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> CliResult<()> {
    const CMD: &[&str] = &["evaluate"];
    let model = load_model(&a.model, CMD)?;
    let mut spec = a.spec.resolve(ctx, CMD)?;
    spec.cnn = model.config.clone();
    let dir = &a.out.out_dir;
    let (rows, samples): (Vec<(&str, Evaluation)>, usize) = if let Some(manifest) = &a.manifest {
        spec.validate_pipeline().map_err(|e| usage(CMD, e.to_string()))?;
        let meta = announce(ctx, "evaluate", Some(spec.seed), &spec)?;
        create_dir(dir)?;
        write_text(&dir.join("run.meta"), &meta)?;
        let (samples, _) = ingest_labeled_networks(manifest, &spec)?;
        (vec![("manifest", evaluate(&model, &samples)?)], samples.len())
    } else {
        spec.validate().map_err(|e| usage(CMD, e.to_string()))?;
        let meta = announce(ctx, "evaluate", Some(spec.seed), &spec)?;
        create_dir(dir)?;
        write_text(&dir.join("run.meta"), &meta)?;
        let data = build_synthetic_dataset(&spec)?;
        let mut rows = Vec::new();
        for (name, split) in data.splits() {
            if a.split == SplitArg::All || format!("{:?}", a.split).eq_ignore_ascii_case(name) {
                rows.push((name, evaluate(&model, split)?));
            }
        }
        let n = rows.iter().map(|(_, e)| e.total()).sum();
        (rows, n)
    };
    let refs: Vec<(&str, &Evaluation)> = rows.iter().map(|(n, e)| (*n, e)).collect();
    write_text(&dir.join("results.csv"), &results_csv(&refs))?;
    for (name, e) in &rows {
        println!("{name}: error {:.4} over {}", e.error_rate, e.total());
    }
    log::info!("evaluated {samples} networks");
    Ok(())
}

fn cmd_ws_grid(ctx: &Ctx, a: &WsGridArgs) -> CliResult<()> {
    const CMD: &[&str] = &["experiment", "ws-grid"];
    let spec = a.spec.resolve_valid(ctx, CMD)?;
    let p_values = a.p_values.clone().unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect());
    let controls = a.controls.clone().unwrap_or_else(|| p_values.iter().copied().filter(|&p| p == 0.1).collect());
    #[derive(Serialize)]
    struct GridSettings<'a> {
        p_values: &'a [f64],
        controls: &'a [f64],
        spec: &'a ExperimentSpec,
    }
    let meta = announce(ctx, "experiment ws-grid", Some(spec.seed), &GridSettings { p_values: &p_values, controls: &controls, spec: &spec })?;
    let dir = &a.out.out_dir;
    create_dir(dir)?;
    write_text(&dir.join("run.meta"), &meta)?;
    let grid = run_ws_grid(&spec, &p_values, &controls).map_err(|e| match e {
        Error::InvalidParams(m) => usage(CMD, m),
        other => other.into(),
    })?;
    write_text(&dir.join("results.csv"), &format_grid_csv(&grid))?;
    for (i, j, e) in &grid.failures {
        eprintln!("cell p={} vs p={} failed: {e}", p_values[*i], p_values[*j]);
    }
    println!("{}", format_grid_csv(&grid));
    if grid.failures.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{} grid cells failed", grid.failures.len())).into())
    }
}

fn cmd_robustness(ctx: &Ctx, a: &RobustnessArgs) -> CliResult<()> {
    const CMD: &[&str] = &["experiment", "robustness"];
    let spec = a.spec.resolve_valid(ctx, CMD)?;
    if a.per_class == 0 {
        return Err(usage(CMD, "--per-class must be positive"));
    }
    #[derive(Serialize)]
    struct RobustSettings<'a> {
        model: Option<&'a Path>,
        nodes: &'a [usize],
        half_degrees: &'a [usize],
        per_class: usize,
        spec: &'a ExperimentSpec,
    }
    let settings = RobustSettings {
        model: a.model.as_deref(),
        nodes: &a.nodes,
        half_degrees: &a.half_degrees,
        per_class: a.per_class,
        spec: &spec,
    };
    let meta = announce(ctx, "experiment robustness", Some(spec.seed), &settings)?;
    let dir = &a.out.out_dir;
    create_dir(dir)?;
    write_text(&dir.join("run.meta"), &meta)?;
    let model = match &a.model {
        Some(path) => load_model(path, CMD)?,
        None => {
            let (_, run) = run_experiment(&spec)?;
            write_text(&dir.join("history.csv"), &format_history_csv(&run.history))?;
            write_checkpoint(&run.model, &dir.join("model.ckpt"))?;
            println!("reference test error {:.4}", run.test.error_rate);
            run.model
        }
    };
    let mut rows = run_size_robustness(&model, &spec, SweepAxis::Nodes, &a.nodes, a.per_class)?;
    rows.extend(run_size_robustness(&model, &spec, SweepAxis::HalfDegree, &a.half_degrees, a.per_class)?);
    let csv = format_robustness_csv(&rows);
    write_text(&dir.join("results.csv"), &csv)?;
    println!("{csv}");
    Ok(())
}

fn cmd_trade(ctx: &Ctx, a: &TradeArgs) -> CliResult<()> {
    const CMD: &[&str] = &["experiment", "trade"];
    let mut spec = a.spec.resolve(ctx, CMD)?;
    if !a.manifest.is_file() {
        return Err(usage(CMD, format!("manifest {} not found", a.manifest.display())));
    }
    if a.spec.config.is_none() {
        // Without a spec file, use the wide network and 9:1:1 split sized to
        // the manifest's labels.
        let text = std::fs::read_to_string(&a.manifest).map_err(|e| Error::io(format!("reading {}", a.manifest.display()), e))?;
        let base = a.manifest.parent().unwrap_or(Path::new("."));
        let entries = parse_manifest(&text, base, &a.manifest).map_err(|e| usage(CMD, e.to_string()))?;
        let classes = entries.iter().map(|e| e.label).max().unwrap_or(0) + 1;
        spec.classes.clear();
        spec.split = SplitRatios::nine_one_one();
        spec.cnn = CnnConfig { classes, ..CnnConfig { seed: spec.cnn.seed, ..CnnConfig::trade() } };
        spec.cnn.epochs = a.spec.epochs.unwrap_or(spec.cnn.epochs);
        spec.cnn.patience = a.spec.patience.unwrap_or(spec.cnn.patience);
        spec.cnn.lr = a.spec.lr.unwrap_or(spec.cnn.lr);
        spec.cnn.batch = a.spec.batch.unwrap_or(spec.cnn.batch);
        spec.cnn.data_parallel = a.spec.data_parallel && !ctx.sequential();
    }
    spec.validate_pipeline().map_err(|e| usage(CMD, e.to_string()))?;
    let meta = announce(ctx, "experiment trade", Some(spec.seed), &spec)?;
    let dir = &a.out.out_dir;
    create_dir(dir)?;
    write_text(&dir.join("run.meta"), &meta)?;
    let (summary, data, run) = run_trade(&a.manifest, &spec)?;
    println!("loaded {}/{} networks, labels {:?}", summary.loaded, summary.entries, summary.label_counts);
    let [n_train, n_val, n_test] = data.sizes();
    log::info!("split sizes train {n_train}, val {n_val}, test {n_test}");
    write_checkpoint(&run.model, &dir.join("model.ckpt"))?;
    write_text(&dir.join("history.csv"), &format_history_csv(&run.history))?;
    write_text(&dir.join("results.csv"), &results_csv(&[("test", &run.test)]))?;
    println!("test error {:.4} over {n_test} networks", run.test.error_rate);
    Ok(())
}

fn cmd_visualize(ctx: &Ctx, a: &VisualizeArgs) -> CliResult<()> {
    const CMD: &[&str] = &["visualize-activations"];
    let model = load_model(&a.model, CMD)?;
    let mut spec = a.spec.resolve(ctx, CMD)?;
    spec.cnn = model.config.clone();
    spec.retain_graphs = true;
    spec.validate_pipeline().map_err(|e| usage(CMD, e.to_string()))?;
    if !(0.0..=1.0).contains(&a.quantile) {
        return Err(usage(CMD, format!("--quantile must lie in [0, 1], got {}", a.quantile)));
    }
    let filters: Vec<usize> = match a.filter {
        Some(f) if f >= model.config.conv1_filters => {
            return Err(usage(CMD, format!("filter {f} out of range (model has {})", model.config.conv1_filters)))
        }
        Some(f) => vec![f],
        None => (0..model.config.conv1_filters).collect(),
    };
    let meta = announce(ctx, "visualize-activations", Some(spec.seed), &spec)?;
    let dir = &a.out.out_dir;
    create_dir(dir)?;
    write_text(&dir.join("run.meta"), &meta)?;

    let (graph, _) = read_edge_list(&a.input, a.directed)?;
    let rng = RngStream::new(spec.seed, stage::CLASS);
    let (image, points) = pipeline_sample(&graph, &spec, &rng)?;
    write_pgm(&image, &dir.join("raster.pgm"), false)?;
    let provenance =
        Provenance { source: a.input.display().to_string(), params: String::new(), seed: rng.seed(), stream: rng.stream_id() };
    let sample = DatasetSample { image, label: 0, provenance, graph: Some(graph), points: Some(points) };
    let logits = model.logits(&sample.image.pixels)?;
    println!("logits {logits:?}, predicted class {}", model.predict(&sample.image.pixels)?);
    for f in filters {
        let map = map_activations(&model, &sample, 1, f, a.quantile)?;
        let (side, levels) = render_overlay(&map.overlay, a.scale);
        write_levels_pgm(side, side, &levels, &dir.join(format!("overlay_f{f}.pgm")), false)?;
        let ids: String = map.active.iter().map(|v| format!("{v}\n")).collect();
        write_text(&dir.join(format!("active_f{f}.txt")), &ids)?;
        println!("filter {f}: threshold {:.4}, {} cells, {} active nodes", map.threshold, map.cells.len(), map.active.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn synopsis_names_the_subcommand() {
        assert!(synopsis(&["train"]).contains("train"));
        assert!(synopsis(&["experiment", "ba-ws"]).contains("ba-ws"));
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(sidecar_meta(Path::new("/tmp/r.edges")), PathBuf::from("/tmp/r.edges.run.meta"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["netclass", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["netclass", "train", "--config", "/definitely/missing.cfg"]), EXIT_USAGE);
        assert_eq!(run(["netclass", "generate", "--model", "ws", "--n", "10", "--k", "3", "--out", "/tmp/x"]), EXIT_USAGE);
    }
}
