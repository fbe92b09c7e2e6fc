//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::channel::build_dataset;
use crate::dataio::{file_checksum, read_checkpoint, read_config, read_dataset, Checkpoint, ResolvedConfig};
use crate::error::{Error, Result};
use crate::eval::{
    ablate, accumulation_curve, build_report, check_compatible, curve_csv, hotspot_grid_for, predict_dataset,
    write_json, write_text,
};
use crate::model::{wmse_loss, forward, ModelConfig, ModelParams, ParamVars, Variant};
use crate::numeric::{grad_check, Tensor};
use crate::train::{fit, split_validation, DataMode, FitOptions, TrainData};

pub const CONFIG_DIR_ENV: &str = "CMANET_CONFIG_DIR";
/// File looked up in the config directory when `--config` is not given.
pub const DEFAULT_CONFIG_NAME: &str = "cmanet.toml";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_FILE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;
pub const EXIT_NUMERIC: i32 = 6;
pub const EXIT_GRADCHECK: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "cmanet", version, about = "Multi-base-station CSI positioning: simulate, train, evaluate")]
pub struct Cli {
    /// Run configuration (TOML). Relative paths are also tried inside the config directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory searched for the config file; `cmanet.toml` there is used when --config is absent.
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    pub config_dir: Option<PathBuf>,

    /// Threads for data generation, per-sample gradients and evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a CSI dataset.
    GenData(GenDataArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write the error report.
    Eval(EvalArgs),
    /// Mean error after every `stride` subcarriers.
    Curve(CurveArgs),
    /// Mean error per horizontal grid cell.
    Hotspot(HotspotArgs),
    /// Train the masked and unmasked variants under identical conditions.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients of the full model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of samples.
    #[arg(long)]
    pub count: usize,
    /// Generator seed [default: from config, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainOverrides {
    /// Training epochs [default: from config, else 140].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Run seed [default: from config, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam learning rate [default: from config, else 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size [default: from config, else 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Validate every this many epochs [default: from config, else 20].
    #[arg(long)]
    pub val_every: Option<usize>,
    /// Validation samples held out or generated [default: from config, else 1000].
    #[arg(long)]
    pub val_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset (fixed mode).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation dataset; without it the tail of --data is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Output directory for checkpoints and metrics.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Model variant: cma or plain [default: from config, else cma].
    #[arg(long, alias = "variant")]
    pub model_variant: Option<Variant>,
    /// fixed (stored dataset) or fresh (new topologies every epoch) [default: from config, else fixed].
    #[arg(long)]
    pub data_mode: Option<DataMode>,
    /// Topologies per epoch in fresh mode [default: from config, else 10000].
    #[arg(long)]
    pub samples_per_epoch: Option<usize>,
    /// Continue from the checkpoint in --out.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Subcarriers between points [default: from config, else 12].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HotspotArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Cell edge in meters [default: from config, else 10].
    #[arg(long)]
    pub grid: Option<f64>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation dataset; without it the tail of --data is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Test dataset.
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory: ablation.json plus one training directory per variant.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Use the tiny configuration L=3, M=2, N=8, d_k=8, hidden=8 (the default sizes).
    #[arg(long)]
    pub tiny: bool,
    /// Parameter seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Model variant: cma or plain.
    #[arg(long, default_value_t = Variant::Cma)]
    pub variant: Variant,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
        Error::Config(_) => EXIT_CONFIG,
        Error::Format { .. } => EXIT_FORMAT,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => 1,
    }
}

/// Parses `argv` and runs it; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn config_path(cli: &Cli) -> Option<PathBuf> {
    match (&cli.config, &cli.config_dir) {
        (Some(p), Some(dir)) if p.is_relative() && !p.exists() => Some(dir.join(p)),
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(dir.join(DEFAULT_CONFIG_NAME)).filter(|p| p.exists()),
        (None, None) => None,
    }
}

fn load_config(cli: &Cli) -> Result<ResolvedConfig> {
    match config_path(cli) {
        Some(p) => read_config(&p),
        None => Ok(ResolvedConfig::defaults()),
    }
}

fn apply(cfg: &mut ResolvedConfig, o: &TrainOverrides) -> Result<()> {
    if let Some(s) = o.seed {
        cfg.seed = s;
        cfg.train.seed = s;
        cfg.scene.seed = s;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = o.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = o.val_every {
        cfg.train.val_every = v;
    }
    if let Some(v) = o.val_samples {
        cfg.train.val_samples = v;
    }
    cfg.validate()
}

fn echo(cfg: &ResolvedConfig, workers: usize) {
    println!("# resolved configuration");
    println!("workers = {workers}");
    print!("{}", cfg.echo());
    println!("# end of configuration");
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut cfg = load_config(cli)?;
    let workers = cli.workers;
    match &cli.command {
        Command::GenData(a) => {
            if let Some(s) = a.seed {
                apply(&mut cfg, &TrainOverrides { seed: Some(s), ..Default::default() })?;
            }
            echo(&cfg, workers);
            let t = Instant::now();
            build_dataset(&cfg.scene, a.count, cfg.seed, workers, &a.out)?;
            println!("wrote {} samples to {} in {:.1?}", a.count, a.out.display(), t.elapsed());
            println!("sha256 {}", file_checksum(&a.out)?);
        }
        Command::Train(a) => {
            apply(&mut cfg, &a.overrides)?;
            if let Some(v) = a.model_variant {
                cfg.model.variant = Some(v);
            }
            if let Some(m) = a.data_mode {
                cfg.train.data_mode = m;
            }
            if let Some(n) = a.samples_per_epoch {
                cfg.train.samples_per_epoch = n;
            }
            cfg.validate()?;
            echo(&cfg, workers);
            let opts = FitOptions {
                out_dir: Some(a.out.clone()),
                resume: a.resume,
                workers,
                progress: false,
            };
            let out = match cfg.train.data_mode {
                DataMode::Fixed => {
                    let Some(path) = &a.data else {
                        return Err(Error::Config("fixed data mode needs --data".into()));
                    };
                    let ds = read_dataset(path)?;
                    let (train_set, val_set) = match &a.val {
                        Some(v) => (ds, read_dataset(v)?),
                        None => split_validation(&ds, cfg.train.val_samples)?,
                    };
                    let h = &train_set.header;
                    let model = cfg.model.config_for(h.bs_count, h.antenna_count, h.subcarriers)?;
                    println!("# model: {}", serde_json::to_string(&model).unwrap_or_default());
                    fit(&model, &cfg.train, TrainData::Fixed { train: &train_set, val: &val_set }, &opts)?
                }
                DataMode::Fresh => {
                    if a.data.is_some() {
                        return Err(Error::Config("--data contradicts fresh data mode".into()));
                    }
                    let s = &cfg.scene;
                    let model = cfg.model.config_for(s.bs_count(), s.antenna_count(), s.n_subcarriers)?;
                    println!("# model: {}", serde_json::to_string(&model).unwrap_or_default());
                    fit(&model, &cfg.train, TrainData::Fresh { scene: s }, &opts)?
                }
            };
            for row in &out.history {
                println!("{}", row.csv());
            }
            println!("checkpoint {}", a.out.join(crate::train::LATEST_CHECKPOINT).display());
        }
        Command::Eval(a) => {
            echo(&cfg, workers);
            let (ck, ds, preds) = load_predictions(&a.checkpoint, &a.data, workers)?;
            let id = file_checksum(&a.checkpoint)?;
            let report = build_report(&preds, &ds, &ck.model, &id, &file_checksum(&a.data)?)?;
            write_json(&a.out, &report)?;
            println!(
                "median {:.3} m, p90 {:.3} m, mean {:.3} m over {} samples (centroid median {:.3} m)",
                report.median_m, report.p90_m, report.mean_m, report.samples, report.centroid_baseline.median_m
            );
        }
        Command::Curve(a) => {
            if let Some(s) = a.stride {
                cfg.eval.stride = s;
            }
            cfg.validate()?;
            echo(&cfg, workers);
            let (_, _, preds) = load_predictions(&a.checkpoint, &a.data, workers)?;
            let curve = accumulation_curve(&preds, cfg.eval.stride)?;
            let text = curve_csv(&curve);
            write_text(&a.out, &text)?;
            print!("{text}");
        }
        Command::Hotspot(a) => {
            if let Some(g) = a.grid {
                cfg.eval.cell_size_m = g;
            }
            cfg.validate()?;
            echo(&cfg, workers);
            let (_, ds, preds) = load_predictions(&a.checkpoint, &a.data, workers)?;
            let grid = hotspot_grid_for(&preds, &ds.header.ue_volume, cfg.eval.cell_size_m)?;
            write_text(&a.out, &grid.to_csv())?;
            println!(
                "{}×{} cells of {} m, {} occupied",
                grid.nx,
                grid.ny,
                grid.cell_size,
                grid.occupied()
            );
        }
        Command::Ablate(a) => {
            apply(&mut cfg, &a.overrides)?;
            echo(&cfg, workers);
            let ds = read_dataset(&a.data)?;
            let test = read_dataset(&a.test)?;
            let (train_set, val_set) = match &a.val {
                Some(v) => (ds, read_dataset(v)?),
                None => split_validation(&ds, cfg.train.val_samples)?,
            };
            let h = &train_set.header;
            let model = cfg.model.config_for(h.bs_count, h.antenna_count, h.subcarriers)?;
            check_compatible(&model, &test)?;
            let opts = FitOptions {
                out_dir: Some(a.out.clone()),
                resume: false,
                workers,
                progress: false,
            };
            let result = ablate(&train_set, &val_set, &test, &model, &cfg.train, &opts)?;
            write_json(&a.out.join("ablation.json"), &result.report)?;
            let s = &result.report.summary;
            println!(
                "cma median {:.3} m, plain median {:.3} m, centroid median {:.3} m, plain - cma {:+.3} m",
                s.cma_median_m, s.plain_median_m, s.centroid_median_m, s.median_delta_m
            );
        }
        Command::Gradcheck(a) => {
            println!("# resolved configuration");
            println!("tiny = {}\nseed = {}\nstep = {}\nvariant = \"{}\"", a.tiny, a.seed, a.step, a.variant);
            println!("# end of configuration");
            let t = Instant::now();
            let rel = tiny_gradcheck(a.seed, a.step, a.variant)?;
            println!("max relative error {rel:.3e} ({:.1?})", t.elapsed());
            if !(rel < GRADCHECK_TOLERANCE) {
                eprintln!("error: gradient check failed: {rel:.3e} >= {GRADCHECK_TOLERANCE:e}");
                return Ok(EXIT_GRADCHECK);
            }
        }
    }
    Ok(0)
}

fn load_predictions(
    checkpoint: &Path,
    data: &Path,
    workers: usize,
) -> Result<(Checkpoint, crate::dataio::Dataset, crate::eval::Predictions)> {
    let ck = read_checkpoint(checkpoint)?;
    let ds = read_dataset(data)?;
    println!("# model: {}", serde_json::to_string(&ck.model).unwrap_or_default());
    let preds = predict_dataset(&ck.params, &ck.model, &ck.normalizer, &ds, workers)?;
    Ok((ck, ds, preds))
}

/// Tiny model configuration used by `gradcheck`.
pub fn tiny_model(variant: Variant) -> ModelConfig {
    ModelConfig {
        d_k: 8,
        lstm_hidden: 8,
        mlp_hidden: 8,
        variant,
        ..ModelConfig::new(3, 2, 8)
    }
}

/// Maximum relative error between backprop and central differences over
/// every parameter of the tiny model on one simulated sample.
pub fn tiny_gradcheck(seed: u64, step: f64, variant: Variant) -> Result<f64> {
    let cfg = tiny_model(variant);
    let mut scene = crate::channel::Scene::desk();
    scene.base_stations.truncate(3);
    scene.array.rows = 1;
    scene.n_subcarriers = 8;
    scene.aim_at_center();
    let ds = crate::channel::generate_dataset(&scene, 1, seed, 1)?;
    let norm = crate::model::Normalizer::from_header(&ds.header);
    let sample = &ds.samples[0];
    let target = norm.to_unit(sample.position);
    let params = ModelParams::init(&cfg, seed)?;
    let leaves: Vec<Tensor> = params.tensors().iter().map(|t| (*t).clone()).collect();
    let report = grad_check(
        |g, v| {
            let pv = ParamVars::from_slice(v)?;
            let est = forward(g, &sample.csi, &pv, &cfg, norm.input_scale)?;
            wmse_loss(g, est, target)
        },
        &leaves,
        step,
    )?;
    Ok(report.max_rel_error)
}
