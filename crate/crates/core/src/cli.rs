//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::augment::{augment_batch, AugmentationConfig};
use crate::cyclegan::{loss_trace_csv, write_synthetic, Direction, GanBundle, GanConfig, GanError};
use crate::dataset::{
    load_image, load_manifest, resize_to_square, save_png, split_manifest, write_manifest,
    DatasetError, DatasetManifest, LabeledSample, Split, SplitFractions, StateLabel,
};
use crate::model::{ModelError, ModelGraph, ModelSpec};
use crate::svm::{
    benchmark_csv, benchmark_kernels, default_gamma, parse_benchmark_csv, read_features,
    train_multiclass, write_features, FeatureMatrix, KernelKind, KernelSpec, SmoConfig, SvmError,
};
use crate::trainer::{
    emit_curves, evaluate, images_to_tensor, load_checkpoint, load_split, read_metrics,
    save_checkpoint, train_two_phase, write_metrics, CheckpointError, LabeledImage, TrainConfig,
    TrainData, TrainError, DEFAULT_LR, DEFAULT_PHASE1_EPOCHS, DEFAULT_PHASE2_EPOCHS,
    DEFAULT_UNFREEZE_FIRST_N,
};

/// Sample counts of the original train/validation/test partition.
pub const REFERENCE_SPLIT_COUNTS: (usize, usize, usize) = (6348, 1377, 1584);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
    #[error("I/O error on {path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

impl CliError {
    /// 2 usage, 3 data or format, 4 numeric divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { path, source } => CliError::Io { path: path.into(), msg: source.to_string() },
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
            TrainError::Config(m) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::nn::NnError> for CliError {
    fn from(e: crate::nn::NnError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { path, source } => CliError::Io { path, msg: source.to_string() },
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SvmError> for CliError {
    fn from(e: SvmError) -> Self {
        match e {
            SvmError::Io { path, source } => CliError::Io { path, msg: source.to_string() },
            SvmError::Config(m) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::Divergence { .. } => CliError::Divergence(e.to_string()),
            GanError::Config(m) => CliError::Usage(m),
            GanError::Data(d) => d.into(),
            GanError::Checkpoint(c) => c.into(),
            GanError::Io { path, source } => CliError::Io { path, msg: source.to_string() },
            e => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cookstate", version, about = "Cooking-state image recognition pipeline")]
pub struct Cli {
    /// Run seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = crate::rng::DEFAULT_SEED)]
    pub seed: u64,
    /// Directory that relative image paths resolve against (defaults to the
    /// manifest's directory).
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    /// Where every output file is written.
    #[arg(long, global = true, default_value = "out")]
    pub output_dir: PathBuf,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write augmented copies of every manifest image.
    Augment(AugmentArgs),
    /// Two-phase fine-tuning of the classifier.
    Train(TrainArgs),
    /// Dump features of one split (penultimate layer unless --layer is given).
    Extract(ExtractArgs),
    /// Train multiclass SVMs on extracted features and benchmark kernels.
    Svm(SvmArgs),
    /// Train the image-translation GAN between two labels.
    GanTrain(GanTrainArgs),
    /// Translate images with trained generators.
    GanGenerate(GanGenerateArgs),
    /// Accuracy and loss of a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Summarize several runs into a comparison table.
    Report(ReportArgs),
    /// Write a small synthetic 11-class corpus.
    ToyCorpus(ToyCorpusArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Augmented variants written per source image.
    #[arg(long, default_value_t = 1)]
    pub per_image: usize,
    /// Maximum rotation in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub rotation: f64,
    /// Maximum shear angle in radians.
    #[arg(long, default_value_t = 0.2)]
    pub shear: f64,
    /// Zoom range half-width.
    #[arg(long, default_value_t = 0.2)]
    pub zoom: f64,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub hflip: bool,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub vflip: bool,
    /// Warp images to this side before augmenting (keep size when absent).
    #[arg(long)]
    pub side: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_PHASE1_EPOCHS)]
    pub phase1_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_PHASE2_EPOCHS)]
    pub phase2_epochs: usize,
    /// Backbone layers unfrozen in phase 2.
    #[arg(long, default_value_t = DEFAULT_UNFREEZE_FIRST_N)]
    pub unfreeze: usize,
    #[arg(long, default_value_t = crate::trainer::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Input side in pixels.
    #[arg(long, default_value_t = 32)]
    pub side: usize,
    /// Initialize the backbone from this checkpoint.
    #[arg(long)]
    pub backbone: Option<PathBuf>,
    /// Extra manifest (for example GAN output) appended to the train split.
    #[arg(long)]
    pub include_synthetic: Option<PathBuf>,
    /// Train without on-the-fly augmentation.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Layer boundary to read activations at; defaults to the input of the final dense layer.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Quadratic,
    Rbf,
    All,
}

#[derive(Debug, Args)]
pub struct SvmArgs {
    #[arg(long)]
    pub train_features: PathBuf,
    #[arg(long)]
    pub val_features: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    pub kernel: KernelArg,
    /// Soft-margin penalty.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// RBF width (default 1/(D·var) of the standardized training features).
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GanTrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Label whose images form domain X.
    #[arg(long)]
    pub domain_x: String,
    /// Label whose images form domain Y.
    #[arg(long)]
    pub domain_y: String,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    /// Cycle-consistency weight.
    #[arg(long, default_value_t = crate::cyclegan::DEFAULT_CYCLE_LAMBDA)]
    pub cycle_lambda: f64,
    #[arg(long, default_value_t = 32)]
    pub side: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    XToY,
    YToX,
}

#[derive(Debug, Args)]
pub struct GanGenerateArgs {
    /// Directory holding generator_g.ckpt and generator_f.ckpt.
    #[arg(long)]
    pub generators: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Label of the images to translate.
    #[arg(long)]
    pub source_label: String,
    /// Label given to the generated images.
    #[arg(long)]
    pub target_label: String,
    #[arg(long, value_enum, default_value = "x-to-y")]
    pub direction: DirectionArg,
    /// Translate at most this many images.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `NAME=PATH` where PATH is a metrics CSV or a kernel benchmark CSV.
    #[arg(long = "run", required = true)]
    pub runs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ToyCorpusArgs {
    #[arg(long, default_value_t = 4)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub side: usize,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be ≥ 1".into()));
        }
        // A global pool can only be installed once per process; later calls
        // keep the existing one.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    create_dir(&cli.output_dir)?;
    match &cli.command {
        Command::Augment(a) => cmd_augment(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Extract(a) => cmd_extract(cli, a),
        Command::Svm(a) => cmd_svm(cli, a),
        Command::GanTrain(a) => cmd_gan_train(cli, a),
        Command::GanGenerate(a) => cmd_gan_generate(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Report(a) => cmd_report(cli, a),
        Command::ToyCorpus(a) => cmd_toy_corpus(cli, a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), msg: e.to_string() })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io { path: path.to_path_buf(), msg: e.to_string() })
}

fn open_manifest(cli: &Cli, path: &Path) -> Result<DatasetManifest, CliError> {
    let mut m = load_manifest(path)?;
    if let Some(root) = &cli.data_root {
        m.root = root.clone();
    }
    Ok(m)
}

/// The manifest as given when every row has a split, otherwise a seeded
/// stratified split in the proportions of the original partition.
pub fn assign_splits(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest, DatasetError> {
    if manifest.is_fully_assigned() {
        return Ok(manifest.clone());
    }
    let (tr, va, te) = REFERENCE_SPLIT_COUNTS;
    let total = (tr + va + te) as f64;
    let fractions = SplitFractions::new(tr as f64 / total, va as f64 / total, te as f64 / total)?;
    split_manifest(manifest, fractions, seed)
}

/// Copy of the manifest with every path made absolute, so it can be stored
/// anywhere.
fn absolute_paths(manifest: &DatasetManifest) -> Result<DatasetManifest, CliError> {
    let root = std::fs::canonicalize(&manifest.root)
        .map_err(|e| CliError::Io { path: manifest.root.clone(), msg: e.to_string() })?;
    let mut out = manifest.clone();
    for s in &mut out.samples {
        s.path = root.join(&s.path).to_string_lossy().into_owned();
    }
    out.root = root;
    Ok(out)
}

fn parse_label(name: &str) -> Result<StateLabel, CliError> {
    name.parse::<StateLabel>().map_err(CliError::from)
}

pub fn cmd_augment(cli: &Cli, a: &AugmentArgs) -> Result<(), CliError> {
    let manifest = open_manifest(cli, &a.manifest)?;
    let config = AugmentationConfig {
        rotation_max: a.rotation,
        shear_max: a.shear,
        zoom_delta: a.zoom,
        hflip: a.hflip,
        vflip: a.vflip,
        ..AugmentationConfig::default()
    };
    config.validate().map_err(CliError::Usage)?;
    let dir = cli.output_dir.join("augmented");
    create_dir(&dir)?;
    let mut samples = Vec::with_capacity(manifest.len() * a.per_image);
    for (i, s) in manifest.samples.iter().enumerate() {
        let mut img = load_image(&manifest.resolve(s))?;
        if let Some(side) = a.side {
            img = resize_to_square(&img, side)?;
        }
        let copies = vec![img; a.per_image];
        let out = augment_batch(&copies, &config, cli.seed, (i * a.per_image) as u64);
        let stem = Path::new(&s.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("img{i}"));
        for (k, img) in out.iter().enumerate() {
            let name = format!("{i:05}_{stem}_aug{k}.png");
            save_png(img, &dir.join(&name))?;
            samples.push(LabeledSample { path: name, label: s.label, split: s.split });
        }
    }
    let out = DatasetManifest::new(&dir, samples)?;
    write_manifest(&out, &dir.join("manifest.csv"))?;
    println!("wrote {} augmented images to {}", out.len(), dir.display());
    Ok(())
}

pub fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<(), CliError> {
    let manifest = assign_splits(&open_manifest(cli, &a.manifest)?, cli.seed)?;
    let mut train = load_split(&manifest, Some(Split::Train), a.side)?;
    if let Some(extra) = &a.include_synthetic {
        let extra = open_manifest(cli, extra)?;
        train.extend(load_split(&extra, None, a.side)?);
    }
    let data = TrainData { train, val: load_split(&manifest, Some(Split::Val), a.side)? };
    let spec = ModelSpec { input_side: a.side, ..ModelSpec::default() };
    let mut model = ModelGraph::build(&spec, cli.seed)?;
    if let Some(path) = &a.backbone {
        let prior = load_checkpoint(path)?;
        if prior.backbone_len != model.backbone_len
            || prior.kinds()[..prior.backbone_len] != model.kinds()[..model.backbone_len]
        {
            return Err(CliError::Data(format!("{}: backbone architecture differs", path.display())));
        }
        for i in model.backbone_range() {
            model.net.layers[i].layer = prior.net.layers[i].layer.clone();
        }
    }
    let config = TrainConfig {
        lr: a.lr,
        phase1_epochs: a.phase1_epochs,
        phase2_epochs: a.phase2_epochs,
        unfreeze_first_n: a.unfreeze,
        batch_size: a.batch_size,
        seed: cli.seed,
        augmentation: if a.no_augment { AugmentationConfig::neutral() } else { AugmentationConfig::default() },
    };
    let history = train_two_phase(&mut model, &data, &config)?;
    save_checkpoint(&model, &cli.output_dir.join("model.ckpt"))?;
    write_metrics(&history, &cli.output_dir.join("metrics.csv"))?;
    if !history.is_empty() {
        emit_curves(&history, &cli.output_dir.join("curves.svg"))?;
    }
    write_manifest(&absolute_paths(&manifest)?, &cli.output_dir.join("split_manifest.csv"))?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs: val accuracy {:.4}, val loss {:.4}",
            history.len(),
            last.val_acc,
            last.val_loss
        );
    }
    Ok(())
}

/// Features of every sample of `split`, in manifest order.
pub fn extract_split(
    model: &mut ModelGraph,
    samples: &[LabeledImage],
    boundary: Option<usize>,
) -> Result<FeatureMatrix, CliError> {
    let boundary = boundary.unwrap_or_else(|| model.dense_index());
    let mut rows = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let images: Vec<_> = chunk
            .iter()
            .map(|s| crate::augment::rescale(&s.image, 1.0 / 255.0))
            .collect();
        let f = model.extract_features_at(&images_to_tensor(&images)?, boundary)?;
        rows.extend((0..f.batch()).map(|i| f.row(i).to_vec()));
    }
    Ok(FeatureMatrix::from_rows(&rows, samples.iter().map(|s| s.label).collect())?)
}

pub fn cmd_extract(cli: &Cli, a: &ExtractArgs) -> Result<(), CliError> {
    let mut model = load_checkpoint(&a.checkpoint)?;
    if let Some(layer) = a.layer {
        if layer > model.len() {
            return Err(CliError::Usage(format!(
                "--layer {layer} is past the last boundary ({})",
                model.len()
            )));
        }
    }
    let manifest = assign_splits(&open_manifest(cli, &a.manifest)?, cli.seed)?;
    let split: Split = a.split.into();
    let samples = load_split(&manifest, Some(split), model.input_side)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("split `{split}` is empty")));
    }
    let features = extract_split(&mut model, &samples, a.layer)?;
    let name = a.out.clone().unwrap_or_else(|| format!("features_{split}.feat"));
    write_features(&features, &cli.output_dir.join(&name))?;
    println!("wrote {}×{} features to {name}", features.rows(), features.cols());
    Ok(())
}

pub fn cmd_svm(cli: &Cli, a: &SvmArgs) -> Result<(), CliError> {
    let train = read_features(&a.train_features)?;
    let val = read_features(&a.val_features)?;
    if train.cols() != val.cols() {
        return Err(CliError::Data(format!(
            "feature widths differ: train {} vs val {}",
            train.cols(),
            val.cols()
        )));
    }
    let kernels: Vec<KernelKind> = match a.kernel {
        KernelArg::Linear => vec![KernelKind::Linear],
        KernelArg::Quadratic => vec![KernelKind::Quadratic],
        KernelArg::Rbf => vec![KernelKind::Rbf],
        KernelArg::All => KernelKind::ALL.to_vec(),
    };
    let config = SmoConfig { c: a.c, ..SmoConfig::default() };
    let gamma = a.gamma.unwrap_or_else(|| default_gamma(&train));
    let scores = benchmark_kernels(&train, &val, &kernels, &config, Some(gamma))?;
    for &kind in &kernels {
        let model = train_multiclass(&train, &KernelSpec { kind, gamma }, &config)?;
        model.save(&cli.output_dir.join(format!("svm_{kind}.json")))?;
    }
    let csv = benchmark_csv(&scores);
    write_file(&cli.output_dir.join("kernel_benchmark.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn domain_images(manifest: &DatasetManifest, label: StateLabel, side: usize) -> Result<Vec<crate::dataset::Image>, CliError> {
    let rows: Vec<_> = manifest.with_label(label).cloned().collect();
    if rows.is_empty() {
        return Err(CliError::Data(format!("no `{label}` images in the manifest")));
    }
    let sub = DatasetManifest::new(manifest.root.clone(), rows)?;
    Ok(load_split(&sub, None, side)?.into_iter().map(|s| s.image).collect())
}

pub fn cmd_gan_train(cli: &Cli, a: &GanTrainArgs) -> Result<(), CliError> {
    let lx = parse_label(&a.domain_x)?;
    let ly = parse_label(&a.domain_y)?;
    let manifest = open_manifest(cli, &a.manifest)?;
    let config = GanConfig {
        image_side: a.side,
        cycle_lambda: a.cycle_lambda,
        lr: a.lr,
        steps: a.steps,
        batch_size: a.batch_size,
        seed: cli.seed,
        ..GanConfig::default()
    };
    let mut bundle = GanBundle::new(config)?;
    let xs = domain_images(&manifest, lx, a.side)?;
    let ys = domain_images(&manifest, ly, a.side)?;
    let trace = bundle.train(&xs, &ys)?;
    bundle.save_generators(&cli.output_dir)?;
    write_file(&cli.output_dir.join("gan_losses.csv"), loss_trace_csv(&trace))?;
    if let Some(last) = trace.last() {
        println!("{} steps, final cycle loss {:.4}", trace.len(), last.cycle);
    }
    Ok(())
}

pub fn cmd_gan_generate(cli: &Cli, a: &GanGenerateArgs) -> Result<(), CliError> {
    let source = parse_label(&a.source_label)?;
    let target = parse_label(&a.target_label)?;
    let manifest = open_manifest(cli, &a.manifest)?;
    let mut bundle = GanBundle::load_generators(&a.generators, GanConfig { seed: cli.seed, ..GanConfig::default() })?;
    let mut images = domain_images(&manifest, source, bundle.config.image_side)?;
    if let Some(limit) = a.limit {
        images.truncate(limit);
    }
    let direction = match a.direction {
        DirectionArg::XToY => Direction::XToY,
        DirectionArg::YToX => Direction::YToX,
    };
    let out = bundle.generate(&images, direction)?;
    let dir = cli.output_dir.join("synthetic");
    let fragment = write_synthetic(&out, &dir, target)?;
    write_manifest(&fragment, &dir.join("manifest.csv"))?;
    println!("wrote {} synthetic images to {}", out.len(), dir.display());
    Ok(())
}

pub fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<(), CliError> {
    let mut model = load_checkpoint(&a.checkpoint)?;
    let manifest = assign_splits(&open_manifest(cli, &a.manifest)?, cli.seed)?;
    let split: Split = a.split.into();
    let samples = load_split(&manifest, Some(split), model.input_side)?;
    let (acc, loss) = evaluate(&mut model, &samples, a.batch_size)?;
    let csv = format!("split,accuracy,loss,samples\n{split},{acc:.6},{loss},{}\n", samples.len());
    write_file(&cli.output_dir.join(format!("evaluation_{split}.csv")), &csv)?;
    println!("{split}: accuracy {acc:.4}, loss {loss:.4} over {} samples", samples.len());
    Ok(())
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub accuracy: f64,
    pub loss: Option<f64>,
    pub epochs: Option<usize>,
    pub source: String,
}

/// Reads one `NAME=PATH` run. Metrics files yield the final epoch's
/// validation figures; kernel benchmarks yield the linear-kernel accuracy.
pub fn report_row(spec: &str) -> Result<ReportRow, CliError> {
    let (name, path) = spec
        .split_once('=')
        .filter(|(n, p)| !n.is_empty() && !p.is_empty())
        .ok_or_else(|| CliError::Usage(format!("--run expects NAME=PATH, got `{spec}`")))?;
    let path = Path::new(path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.to_path_buf(), msg: e.to_string() })?;
    if text.starts_with("kernel,") {
        let scores = parse_benchmark_csv(&text)?;
        let linear = scores
            .iter()
            .find(|s| s.kernel == KernelKind::Linear)
            .or(scores.first())
            .ok_or_else(|| CliError::Data(format!("{}: empty benchmark", path.display())))?;
        return Ok(ReportRow {
            model: name.to_string(),
            accuracy: linear.accuracy,
            loss: None,
            epochs: None,
            source: format!("{} svm validation", linear.kernel),
        });
    }
    let history = read_metrics(path)?;
    let last = history
        .last()
        .ok_or_else(|| CliError::Data(format!("{}: no metric records", path.display())))?;
    Ok(ReportRow {
        model: name.to_string(),
        accuracy: last.val_acc,
        loss: Some(last.val_loss),
        epochs: Some(history.len()),
        source: "final epoch validation".into(),
    })
}

/// Rows sorted by accuracy ascending, then by name.
pub fn build_report(runs: &[String]) -> Result<Vec<ReportRow>, CliError> {
    let mut rows = runs.iter().map(|r| report_row(r)).collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then_with(|| a.model.cmp(&b.model)));
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("model,accuracy,loss,epochs,source\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{},{},{}\n",
            r.model,
            r.accuracy,
            r.loss.map(|l| format!("{l:.6}")).unwrap_or_default(),
            r.epochs.map(|e| e.to_string()).unwrap_or_default(),
            r.source
        ));
    }
    out
}

pub fn report_text(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>6}  source\n", "model", "accuracy", "loss", "epochs");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>7.2}%  {:>8}  {:>6}  {}\n",
            r.model,
            100.0 * r.accuracy,
            r.loss.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into()),
            r.epochs.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
            r.source
        ));
    }
    out
}

pub fn cmd_report(cli: &Cli, a: &ReportArgs) -> Result<(), CliError> {
    let rows = build_report(&a.runs)?;
    let text = report_text(&rows);
    write_file(&cli.output_dir.join("report.csv"), report_csv(&rows))?;
    write_file(&cli.output_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_toy_corpus(cli: &Cli, a: &ToyCorpusArgs) -> Result<(), CliError> {
    let dir = cli.output_dir.join("toy");
    let m = crate::toy::write_class_corpus(&dir, a.per_class, a.side, cli.seed)?;
    println!("wrote {} images and manifest.csv to {}", m.len(), dir.display());
    Ok(())
}
