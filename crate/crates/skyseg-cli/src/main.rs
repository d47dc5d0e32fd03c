//! `skyseg`: cloud segmentation pipeline for ground-based IR sky images.
//!
//! Subcommands: `synth`, `preprocess`, `train`, `segment`, `cross-validate`,
//! `benchmark`, `vote`. Every command writes its outputs under `--out`
//! together with a `skyseg-run.json` recording the full configuration, seed
//! and version, so a run is reproducible from its manifest alone.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model or
//! convergence error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use skyseg::error::Error as SkyError;
use skyseg::evaluation::{
    benchmark, default_lambda_grid, loo_cross_validate, roc_select_lambda, timing_csv,
    ConfusionMatrix, EvalReport, GridSpec,
};
use skyseg::features::{extract, FeatureFamily, FeatureFrame, FeatureSpec, Neighborhood};
use skyseg::imaging::manifest::load_manifest;
use skyseg::imaging::{io as frame_io, LabelMask, LoadedDataset, Split};
use skyseg::model::{load_model, save_model, train, ModelFamily, SegModel, TrainConfig};
use skyseg::mrf::{AnnealSchedule, CliqueOrder};
use skyseg::preprocess::Preprocessor;
use skyseg::synth::{synth_dataset, SceneParams};

#[derive(Parser)]
#[command(name = "skyseg", version, about = "Infrared sky-image cloud segmentation")]
struct Cli {
    /// Worker thread cap (falls back to SKYSEG_THREADS, then the command
    /// default: all cores for cross-validate, 1 for benchmark).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (frames, weather, labels, manifest).
    Synth(SynthArgs),
    /// Convert an external numeric grid dump into the frame format.
    Convert(ConvertArgs),
    /// Write derived channels for every frame of a manifest.
    Preprocess(PreprocessArgs),
    /// Train one model and save it.
    Train(TrainArgs),
    /// Segment the frames of a manifest with a trained model.
    Segment(SegmentArgs),
    /// Leave-one-out cross-validation over a hyperparameter grid.
    CrossValidate(CrossValidateArgs),
    /// Single-threaded timing benchmark of a trained model.
    Benchmark(BenchmarkArgs),
    /// Majority vote of several trained models.
    Vote(VoteArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    train: usize,
    #[arg(long, default_value_t = 5)]
    test: usize,
    /// Scene preset: well-separated | noisy-boundary.
    #[arg(long, default_value = "well-separated")]
    scene: String,
    #[arg(long, default_value_t = 60)]
    rows: usize,
    #[arg(long, default_value_t = 80)]
    cols: usize,
}

#[derive(Args, Serialize)]
struct ConvertArgs {
    /// Input file: whitespace-separated pixel values, row-major. A `rows
    /// cols` header line is optional when --rows/--cols are given.
    #[arg(long)]
    input: PathBuf,
    /// Output frame file (the `.meta` sidecar lands next to it).
    #[arg(long)]
    out: PathBuf,
    /// Input unit: centikelvin (integers, stored as-is) | kelvin (floats,
    /// scaled by 100 and rounded).
    #[arg(long, default_value = "centikelvin")]
    unit: String,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Capture time, UTC seconds.
    #[arg(long, default_value_t = 0)]
    timestamp: i64,
    #[arg(long, default_value_t = 45.0)]
    sun_elevation: f64,
    #[arg(long, default_value_t = 180.0)]
    sun_azimuth: f64,
}

#[derive(Args, Serialize)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// raw | window | atmosphere | all
    #[arg(long, default_value = "all")]
    stage: String,
}

#[derive(Args, Serialize)]
struct ModelParams {
    /// gda | nbc | kmeans | gmm | rrc | svc | gpc | mrf | sa-mrf | icm-mrf | sa-icm-mrf
    #[arg(long)]
    family: String,
    /// Feature family: x1 | x2 | x3 | x4.
    #[arg(long, default_value = "x3")]
    features: String,
    /// single | first | second
    #[arg(long, default_value = "first")]
    neighborhood: String,
    #[arg(long, default_value_t = false)]
    standardize: bool,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    cost: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Clique order: 1 (4-neighborhood) | 2 (8-neighborhood).
    #[arg(long, default_value = "1")]
    clique: String,
    /// Polynomial map order for discriminative families.
    #[arg(long, default_value_t = 1)]
    order: u32,
    #[arg(long, default_value_t = 0.75)]
    cooling: f64,
    #[arg(long, default_value_t = 40)]
    sa_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelParams {
    fn feature_spec(&self) -> Result<FeatureSpec, SkyError> {
        Ok(FeatureSpec {
            family: FeatureFamily::parse(&self.features)?,
            neighborhood: Neighborhood::parse(&self.neighborhood)?,
            standardize: self.standardize,
        })
    }

    fn train_config(&self) -> Result<TrainConfig, SkyError> {
        let mut config = TrainConfig::new(ModelFamily::parse(&self.family)?, self.feature_spec()?);
        config.gamma = self.gamma;
        config.cost = self.cost;
        config.beta = self.beta;
        config.clique = CliqueOrder::parse(&self.clique)?;
        config.order = self.order;
        config.schedule = AnnealSchedule {
            initial_temp: 1.0,
            cooling: self.cooling,
            steps: self.sa_steps,
        };
        config.seed = self.seed;
        Ok(config)
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelParams,
    /// Fixed decision prior; when omitted it is selected on the pooled
    /// training scores by maximizing the J statistic.
    #[arg(long)]
    lambda: Option<f64>,
    /// Output model file; the run manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SegmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Trained model file from `skyseg train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which split to segment: train | test | all.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args, Serialize)]
struct CrossValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    family: String,
    /// Comma-separated feature families to sweep.
    #[arg(long, default_value = "x3")]
    features: String,
    /// Comma-separated neighborhoods to sweep.
    #[arg(long, default_value = "single,first")]
    neighborhoods: String,
    #[arg(long, default_value_t = false)]
    standardize: bool,
    #[arg(long, default_value = "0.1,1")]
    gammas: String,
    #[arg(long, default_value = "1")]
    costs: String,
    #[arg(long, default_value = "0.5,1")]
    betas: String,
    #[arg(long, default_value = "0.75")]
    coolings: String,
    #[arg(long, default_value = "1")]
    orders: String,
    #[arg(long, default_value = "1")]
    cliques: String,
    /// Comma-separated decision priors; empty uses the default log grid.
    #[arg(long, default_value = "")]
    lambdas: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optionally retrain the best configuration on the full training split
    /// and save it here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BenchmarkArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct VoteArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated model files.
    #[arg(long)]
    models: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let default_threads = match &cli.command {
        Command::Benchmark(_) => 1,
        _ => 0, // rayon default: all cores
    };
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("SKYSEG_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(default_threads);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let result = match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Convert(args) => run_convert(args),
        Command::Preprocess(args) => run_preprocess(args),
        Command::Train(args) => run_train(args),
        Command::Segment(args) => run_segment(args),
        Command::CrossValidate(args) => run_cross_validate(args),
        Command::Benchmark(args) => run_benchmark(args),
        Command::Vote(args) => run_vote(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                SkyError::Config(_) => 1,
                SkyError::Parse { .. } | SkyError::Io { .. } | SkyError::Domain(_) => 2,
                SkyError::Convergence(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

/// Serializes the run configuration next to the outputs. Contents are a pure
/// function of the configuration (no timestamps), keeping runs byte-stable.
fn write_run_manifest<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<(), SkyError> {
    #[derive(Serialize)]
    struct RunManifest<'a, T> {
        command: &'a str,
        version: &'a str,
        config: &'a T,
    }
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: args,
    };
    let path = dir.join("skyseg-run.json");
    std::fs::create_dir_all(dir).map_err(|e| SkyError::io(dir, e))?;
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SkyError::Config(format!("run manifest serialization failed: {e}")))?;
    std::fs::write(&path, body + "\n").map_err(|e| SkyError::io(&path, e))
}

fn scene_params(args: &SynthArgs) -> Result<SceneParams, SkyError> {
    let mut params = match args.scene.as_str() {
        "well-separated" => SceneParams::well_separated(),
        "noisy-boundary" => SceneParams::noisy_boundary(),
        other => {
            return Err(SkyError::Config(format!(
                "unknown scene preset `{other}` (expected well-separated|noisy-boundary)"
            )))
        }
    };
    params.rows = args.rows;
    params.cols = args.cols;
    params.background.sun_row = (args.rows as f64 - 1.0) / 2.0;
    params.background.sun_col = (args.cols as f64 - 1.0) / 2.0;
    Ok(params)
}

fn run_synth(args: &SynthArgs) -> Result<(), SkyError> {
    let params = scene_params(args)?;
    write_run_manifest(&args.out, "synth", args)?;
    let manifest = synth_dataset(args.seed, args.train, args.test, &params, &args.out)?;
    println!(
        "wrote {} entries under {}",
        manifest.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn run_convert(args: &ConvertArgs) -> Result<(), SkyError> {
    let content =
        std::fs::read_to_string(&args.input).map_err(|e| SkyError::io(&args.input, e))?;
    let mut tokens = content.split_whitespace().peekable();

    // Shape from flags, or from a leading `rows cols` header.
    let (rows, cols) = match (args.rows, args.cols) {
        (Some(r), Some(c)) => (r, c),
        (None, None) => {
            let mut header = || -> Option<usize> { tokens.next()?.parse().ok() };
            let r = header().ok_or_else(|| {
                SkyError::parse(&args.input, 1, "no --rows/--cols and no `rows cols` header")
            })?;
            let c = header().ok_or_else(|| {
                SkyError::parse(&args.input, 1, "malformed `rows cols` header")
            })?;
            (r, c)
        }
        _ => {
            return Err(SkyError::Config(
                "--rows and --cols must be given together".into(),
            ))
        }
    };

    let to_raw: fn(f64) -> i64 = match args.unit.as_str() {
        "centikelvin" => |v| v.round() as i64,
        "kelvin" => |v| (v * 100.0).round() as i64,
        other => {
            return Err(SkyError::Config(format!(
                "unknown unit `{other}` (expected centikelvin|kelvin)"
            )))
        }
    };
    let mut raw = Vec::with_capacity(rows * cols);
    for token in tokens {
        let value: f64 = token.parse().map_err(|_| {
            SkyError::parse(&args.input, 0, format!("non-numeric cell `{token}`"))
        })?;
        let cell = to_raw(value);
        if cell <= 0 {
            return Err(SkyError::Domain(format!(
                "cell `{token}` is not a positive radiometric temperature"
            )));
        }
        raw.push(cell as u32);
    }
    if raw.len() != rows * cols {
        return Err(SkyError::Domain(format!(
            "expected {} cells, found {}",
            rows * cols,
            raw.len()
        )));
    }
    let frame = skyseg::imaging::IRFrame::new(
        skyseg::grid::Grid::from_vec(rows, cols, raw),
        args.timestamp,
        args.sun_elevation,
        args.sun_azimuth,
    )?;
    frame_io::save_frame(&frame, &args.out)?;
    println!("wrote {}x{} frame to {}", rows, cols, args.out.display());
    Ok(())
}

/// Loads a manifest and fully calibrates the preprocessor on it.
fn load_and_calibrate(path: &Path) -> Result<(LoadedDataset, Preprocessor), SkyError> {
    let manifest = load_manifest(path)?;
    let dataset = manifest.load()?;
    let mut pre = Preprocessor::new();
    pre.calibrate(&dataset.entries);
    Ok((dataset, pre))
}

fn entry_name(idx: usize, split: Split) -> String {
    format!("{}_{idx:03}", split.as_str())
}

fn run_preprocess(args: &PreprocessArgs) -> Result<(), SkyError> {
    let stages = ["raw", "window", "atmosphere", "all"];
    let stage_idx = stages
        .iter()
        .position(|s| *s == args.stage)
        .ok_or_else(|| {
            SkyError::Config(format!(
                "unknown stage `{}` (expected raw|window|atmosphere|all)",
                args.stage
            ))
        })?;
    let (dataset, pre) = load_and_calibrate(&args.manifest)?;
    write_run_manifest(&args.out, "preprocess", args)?;

    let mut split_counts = [0usize; 2];
    for entry in &dataset.entries {
        let idx = match entry.split {
            Split::Train => {
                split_counts[0] += 1;
                split_counts[0] - 1
            }
            Split::Test => {
                split_counts[1] += 1;
                split_counts[1] - 1
            }
        };
        let name = entry_name(idx, entry.split);
        let derived = pre.derive(&entry.frame, &entry.weather, entry.prev.as_ref())?;
        let mut channels: Vec<(&str, skyseg::grid::Grid<f64>)> = vec![
            ("temp_raw", derived.temp_raw.clone()),
            ("height_raw", derived.height_raw.clone()),
        ];
        if stage_idx >= 1 {
            channels.push(("temp_corrected", derived.temp_corrected.clone()));
            channels.push(("height_corrected", derived.height_corrected.clone()));
        }
        if stage_idx >= 2 {
            channels.push(("delta_temp", derived.delta_temp.clone()));
            channels.push(("delta_height", derived.delta_height.clone()));
            channels.push(("intensity", derived.intensity.map(|&v| v as f64)));
        }
        if stage_idx >= 3 {
            channels.push(("flow_u", derived.flow.map(|v| v[0])));
            channels.push(("flow_v", derived.flow.map(|v| v[1])));
        }
        for (channel, grid) in channels {
            let path = args.out.join(format!("{name}.{channel}.txt"));
            frame_io::save_channel(&grid, &path)?;
        }
    }
    println!(
        "wrote derived channels for {} frames under {}",
        dataset.entries.len(),
        args.out.display()
    );
    Ok(())
}

/// Extracts (and labels, when present) the features of every entry.
fn extract_all(
    dataset: &LoadedDataset,
    pre: &Preprocessor,
    spec: &FeatureSpec,
) -> Result<Vec<FeatureFrame>, SkyError> {
    dataset
        .entries
        .iter()
        .map(|entry| {
            let derived = pre.derive(&entry.frame, &entry.weather, entry.prev.as_ref())?;
            let mut features = extract(&derived, spec)?;
            if let Some(label) = &entry.label {
                features.attach_labels(label)?;
            }
            Ok(features)
        })
        .collect()
}

fn train_split_frames<'a>(
    dataset: &LoadedDataset,
    frames: &'a [FeatureFrame],
) -> Vec<&'a FeatureFrame> {
    dataset
        .entries
        .iter()
        .zip(frames)
        .filter(|(e, _)| e.split == Split::Train)
        .map(|(_, f)| f)
        .collect()
}

fn run_train(args: &TrainArgs) -> Result<(), SkyError> {
    let config = args.model.train_config()?;
    let (dataset, pre) = load_and_calibrate(&args.manifest)?;
    let frames = extract_all(&dataset, &pre, &config.feature_spec)?;
    let train_frames = train_split_frames(&dataset, &frames);
    if train_frames.is_empty() {
        return Err(SkyError::Config("manifest has no training entries".into()));
    }
    let mut model = train(&config, &train_frames)?;

    model.lambda = match args.lambda {
        Some(lambda) => lambda,
        None => {
            let mut scores = Vec::new();
            let mut truth = Vec::new();
            for frame in &train_frames {
                scores.extend(model.score_frame(frame)?);
                truth.extend_from_slice(frame.labels.as_ref().ok_or_else(|| {
                    SkyError::Config("prior selection needs labeled training frames".into())
                })?);
            }
            let choice = roc_select_lambda(&scores, &truth, &default_lambda_grid());
            println!(
                "selected lambda = {:.4} (training J = {:.4})",
                choice.lambda, choice.j_stat
            );
            choice.lambda
        }
    };

    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            write_run_manifest(dir, "train", args)?;
        }
    }
    save_model(&model, &args.out)?;
    println!("saved {} model to {}", model.family.as_str(), args.out.display());
    Ok(())
}

fn parse_split(s: &str) -> Result<Option<Split>, SkyError> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        other => Err(SkyError::Config(format!(
            "unknown split `{other}` (expected train|test|all)"
        ))),
    }
}

fn run_segment(args: &SegmentArgs) -> Result<(), SkyError> {
    let model = load_model(&args.model)?;
    let split = parse_split(&args.split)?;
    let (dataset, pre) = load_and_calibrate(&args.manifest)?;
    let frames = extract_all(&dataset, &pre, &model.feature_spec)?;
    write_run_manifest(&args.out, "segment", args)?;

    let mut images = Vec::new();
    let mut split_counts = [0usize; 2];
    for (entry, features) in dataset.entries.iter().zip(&frames) {
        let idx = match entry.split {
            Split::Train => {
                split_counts[0] += 1;
                split_counts[0] - 1
            }
            Split::Test => {
                split_counts[1] += 1;
                split_counts[1] - 1
            }
        };
        if split.is_some_and(|s| entry.split != s) {
            continue;
        }
        let (scores, mask) = model.predict_frame(features)?;
        let name = entry_name(idx, entry.split);
        let mask_label = LabelMask::new(mask.clone())
            .expect("prediction masks are binary");
        frame_io::save_label(&mask_label, &args.out.join(format!("{name}.mask.txt")))?;
        let score_grid =
            skyseg::grid::Grid::from_vec(features.rows(), features.cols(), scores);
        frame_io::save_channel(&score_grid, &args.out.join(format!("{name}.score.txt")))?;
        if let Some(label) = &entry.label {
            images.push(ConfusionMatrix::from_masks(&mask, label.grid()));
        }
    }
    if !images.is_empty() {
        let report = EvalReport::from_images(images);
        std::fs::write(args.out.join("eval.csv"), report.to_csv())
            .map_err(|e| SkyError::io(&args.out.join("eval.csv"), e))?;
        println!(
            "aggregate J = {:.4}, accuracy = {:.4}",
            report.aggregate.j_stat(),
            report.aggregate.accuracy()
        );
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
    }
    println!("wrote masks under {}", args.out.display());
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, SkyError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| SkyError::Config(format!("invalid {what} entry `{t}`")))
        })
        .collect()
}

fn run_cross_validate(args: &CrossValidateArgs) -> Result<(), SkyError> {
    let family = ModelFamily::parse(&args.family)?;
    let mut feature_specs = Vec::new();
    for fam in args.features.split(',') {
        for nb in args.neighborhoods.split(',') {
            feature_specs.push(FeatureSpec {
                family: FeatureFamily::parse(fam.trim())?,
                neighborhood: Neighborhood::parse(nb.trim())?,
                standardize: args.standardize,
            });
        }
    }
    let mut grid = GridSpec::new(family, feature_specs);
    grid.gammas = parse_list(&args.gammas, "gamma")?;
    grid.costs = parse_list(&args.costs, "cost")?;
    grid.betas = parse_list(&args.betas, "beta")?;
    grid.coolings = parse_list(&args.coolings, "cooling")?;
    grid.orders = parse_list(&args.orders, "order")?;
    grid.cliques = args
        .cliques
        .split(',')
        .map(|c| CliqueOrder::parse(c.trim()))
        .collect::<Result<_, _>>()?;
    let lambdas: Vec<f64> = parse_list(&args.lambdas, "lambda")?;
    if !lambdas.is_empty() {
        grid.lambdas = lambdas;
    }
    grid.seed = args.seed;

    let (dataset, pre) = load_and_calibrate(&args.manifest)?;
    // One spec at a time would re-extract per config; extract the union once.
    let mut frames_by_spec: BTreeMap<String, Vec<FeatureFrame>> = BTreeMap::new();
    for spec in &grid.feature_specs {
        frames_by_spec
            .entry(spec.to_string())
            .or_insert(extract_all(&dataset, &pre, spec)?);
    }
    // The LOO harness takes one image list; run it per feature spec and keep
    // the global best.
    let mut all_rows = Vec::new();
    let mut best: Option<skyseg::evaluation::LooRow> = None;
    for spec in grid.feature_specs.clone() {
        let frames = &frames_by_spec[&spec.to_string()];
        let train_frames: Vec<FeatureFrame> = dataset
            .entries
            .iter()
            .zip(frames)
            .filter(|(e, _)| e.split == Split::Train)
            .map(|(_, f)| f.clone())
            .collect();
        let mut sub_grid = grid.clone();
        sub_grid.feature_specs = vec![spec];
        let report = loo_cross_validate(&train_frames, &sub_grid)?;
        for (config, reason) in &report.invalid {
            eprintln!(
                "warning: grid point {} excluded: {reason}",
                config.feature_spec
            );
        }
        if best
            .as_ref()
            .is_none_or(|b| report.best.mean_j > b.mean_j)
        {
            best = Some(report.best.clone());
        }
        all_rows.extend(report.rows);
    }
    let best = best.ok_or_else(|| SkyError::Convergence("no valid grid point".into()))?;

    let report = skyseg::evaluation::LooReport {
        rows: all_rows,
        invalid: Vec::new(),
        best: best.clone(),
    };
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            write_run_manifest(dir, "cross-validate", args)?;
        }
    }
    std::fs::write(&args.out, report.to_csv()).map_err(|e| SkyError::io(&args.out, e))?;
    println!(
        "best: features `{}` gamma {} cost {} beta {} lambda {:.4} -> mean J {:.4}",
        best.config.feature_spec,
        best.config.gamma,
        best.config.cost,
        best.config.beta,
        best.config.lambda,
        best.mean_j
    );

    if let Some(model_out) = &args.model_out {
        let frames = &frames_by_spec[&best.config.feature_spec.to_string()];
        let train_frames = train_split_frames(&dataset, frames);
        let model = train(&best.config, &train_frames)?;
        save_model(&model, model_out)?;
        println!("saved best model to {}", model_out.display());
    }
    Ok(())
}

fn run_benchmark(args: &BenchmarkArgs) -> Result<(), SkyError> {
    let model = load_model(&args.model)?;
    let (dataset, pre) = load_and_calibrate(&args.manifest)?;
    let test_entries: Vec<_> = dataset
        .entries
        .iter()
        .filter(|e| e.split == Split::Test)
        .cloned()
        .collect();
    let entries = if test_entries.is_empty() {
        dataset.entries.clone()
    } else {
        test_entries
    };
    let timing = benchmark(&model, &entries, &pre, args.repetitions)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            write_run_manifest(dir, "benchmark", args)?;
        }
    }
    // Attach the J statistic over the benchmarked entries when labels exist.
    let j_stat = if entries.iter().all(|e| e.label.is_some()) {
        let mut aggregate = ConfusionMatrix::default();
        for entry in &entries {
            let derived = pre.derive(&entry.frame, &entry.weather, entry.prev.as_ref())?;
            let features = extract(&derived, &model.feature_spec)?;
            let (_, mask) = model.predict_frame(&features)?;
            aggregate.merge(&ConfusionMatrix::from_masks(
                &mask,
                entry.label.as_ref().unwrap().grid(),
            ));
        }
        aggregate.j_stat()
    } else {
        f64::NAN
    };
    let rows = vec![(model.family.as_str().to_string(), j_stat, timing.clone())];
    std::fs::write(&args.out, timing_csv(&rows)).map_err(|e| SkyError::io(&args.out, e))?;
    println!(
        "preprocess {:.3} ms/image, segment {:.3} ms/image (median over {} repetitions), total {:.3} ms/image",
        timing.preprocess_ms_per_image,
        timing.segment_ms_per_image,
        args.repetitions,
        timing.total_ms_per_image
    );
    Ok(())
}

fn run_vote(args: &VoteArgs) -> Result<(), SkyError> {
    let model_paths: Vec<PathBuf> = args.models.split(',').map(PathBuf::from).collect();
    if model_paths.is_empty() {
        return Err(SkyError::Config("vote needs at least one model".into()));
    }
    if model_paths.len().is_multiple_of(2) {
        eprintln!("warning: even member count; ties resolve toward cloud");
    }
    let members: Vec<SegModel> = model_paths
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<_, _>>()?;
    let split = parse_split(&args.split)?;
    let (dataset, pre) = load_and_calibrate(&args.manifest)?;

    // Features per member spec, extracted once per distinct spec.
    let mut frames_by_spec: BTreeMap<String, Vec<FeatureFrame>> = BTreeMap::new();
    for member in &members {
        frames_by_spec
            .entry(member.feature_spec.to_string())
            .or_insert(extract_all(&dataset, &pre, &member.feature_spec)?);
    }
    write_run_manifest(&args.out, "vote", args)?;

    let member_refs: Vec<&SegModel> = members.iter().collect();
    let mut images = Vec::new();
    let mut split_counts = [0usize; 2];
    for (k, entry) in dataset.entries.iter().enumerate() {
        let idx = match entry.split {
            Split::Train => {
                split_counts[0] += 1;
                split_counts[0] - 1
            }
            Split::Test => {
                split_counts[1] += 1;
                split_counts[1] - 1
            }
        };
        if split.is_some_and(|s| entry.split != s) {
            continue;
        }
        let frame_refs: Vec<&FeatureFrame> = members
            .iter()
            .map(|m| &frames_by_spec[&m.feature_spec.to_string()][k])
            .collect();
        let (probability, mask) = skyseg::evaluation::vote(&member_refs, &frame_refs)?;
        let name = entry_name(idx, entry.split);
        let mask_label = LabelMask::new(mask.clone()).expect("vote masks are binary");
        frame_io::save_label(&mask_label, &args.out.join(format!("{name}.mask.txt")))?;
        let rows = frame_refs[0].rows();
        let cols = frame_refs[0].cols();
        let prob_grid = skyseg::grid::Grid::from_vec(rows, cols, probability);
        frame_io::save_channel(&prob_grid, &args.out.join(format!("{name}.probability.txt")))?;
        if let Some(label) = &entry.label {
            images.push(ConfusionMatrix::from_masks(&mask, label.grid()));
        }
    }
    if !images.is_empty() {
        let report = EvalReport::from_images(images);
        std::fs::write(args.out.join("eval.csv"), report.to_csv())
            .map_err(|e| SkyError::io(&args.out.join("eval.csv"), e))?;
        println!("vote aggregate J = {:.4}", report.aggregate.j_stat());
    }
    println!("wrote vote outputs under {}", args.out.display());
    Ok(())
}
