//! Mini-batch Adam training with periodic validation, checkpoints and a
//! metrics log.

mod adam;
mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::{adam_step, adam_update, clip_global_norm, OptimizerState};
pub use config::{DataMode, TrainConfig};

use crate::channel::{generate_dataset, Scene};
use crate::dataio::{checksum, read_checkpoint, write_checkpoint, Checkpoint, Dataset, RngState, Sample};
use crate::error::{Error, Result};
use crate::eval::{check_compatible, predict_dataset, summarize, ErrorSummary};
use crate::model::{loss_and_grads, ModelConfig, ModelParams, Normalizer};

const SHUFFLE_TAG: u64 = 1;
const FRESH_DATA_TAG: u64 = 2;
const VALIDATION_TAG: u64 = 3;

/// A seed for item `index` of the purpose `tag`, derived from the run seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos(2 * u128::from(index));
    rng.next_u64()
}

fn shuffle_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, SHUFFLE_TAG, epoch))
}

/// Model, optimizer and progress of one training run.
pub struct Trainer {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub norm: Normalizer,
    pub params: ModelParams,
    pub opt: OptimizerState,
    /// Completed epochs.
    pub epoch: u64,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(model: ModelConfig, train: TrainConfig, norm: Normalizer) -> Result<Self> {
        model.validate()?;
        train.validate()?;
        let params = ModelParams::init(&model, train.seed)?;
        let opt = OptimizerState::new(&params);
        Ok(Self {
            model,
            train,
            norm,
            params,
            opt,
            epoch: 0,
            pool: None,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let opt = ck.optimizer.unwrap_or_else(|| OptimizerState::new(&ck.params));
        Ok(Self {
            model: ck.model,
            train,
            norm: ck.normalizer,
            params: ck.params,
            opt,
            epoch: ck.epoch,
            pool: None,
        })
    }

    /// Per-sample work runs on `workers` threads (`0` = all cores). The batch
    /// gradient is reduced in sample order, so results do not depend on it.
    pub fn set_workers(&mut self, workers: usize) {
        self.pool = (workers != 1)
            .then(|| rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok())
            .flatten();
    }

    pub fn checkpoint(&self, dataset_checksum: Option<String>) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train: Some(self.train.clone()),
            normalizer: self.norm.clone(),
            epoch: self.epoch,
            params: self.params.clone(),
            optimizer: Some(self.opt.clone()),
            rng: Some(RngState {
                seed: self.train.seed,
                next_epoch: self.epoch + 1,
            }),
            dataset_checksum,
        }
    }

    fn sample_grads(&self, batch: &[&Sample]) -> Result<Vec<(f64, Vec<Vec<f64>>)>> {
        let w = 1.0 / batch.len() as f64;
        let run = |s: &&Sample| loss_and_grads(&self.params, &self.model, &self.norm, s, w);
        match &self.pool {
            Some(pool) => pool.install(|| batch.par_iter().map(run).collect()),
            None => batch.iter().map(run).collect(),
        }
    }

    /// One optimizer step on the mean loss of `batch`; returns that mean loss.
    pub fn step(&mut self, batch: &[&Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let results = self.sample_grads(batch)?;
        let mut total: Vec<Vec<f64>> = self.params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        let mut loss = 0.0;
        for (l, grads) in results {
            loss += l;
            for (acc, g) in total.iter_mut().zip(grads) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        clip_global_norm(&mut total, self.train.clip_norm);
        adam_step(&mut self.params, &total, &mut self.opt, &self.train)?;
        Ok(loss)
    }

    /// One pass over `samples` in shuffled mini-batches. Returns the mean
    /// training loss over the epoch.
    pub fn train_epoch(&mut self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Contract("cannot train on an empty dataset".into()));
        }
        let epoch = self.epoch + 1;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut shuffle_rng(self.train.seed, epoch));
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(self.train.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let loss = self
                .step(&batch)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {b}: {msg}")),
                    other => other,
                })?;
            weighted += loss * batch.len() as f64;
        }
        self.epoch = epoch;
        Ok(weighted / samples.len() as f64)
    }

    /// Median, 90th percentile and mean error of the final estimates, meters.
    pub fn validate(&self, val: &Dataset, workers: usize) -> Result<ErrorSummary> {
        let preds = predict_dataset(&self.params, &self.model, &self.norm, val, workers)?;
        summarize(&preds.final_errors()?)
    }
}

/// The topologies of `epoch` in fresh mode.
pub fn fresh_epoch_data(scene: &Scene, train: &TrainConfig, epoch: u64, workers: usize) -> Result<Dataset> {
    let seed = derive_seed(train.seed, FRESH_DATA_TAG, epoch);
    generate_dataset(scene, train.samples_per_epoch, seed, workers)
}

/// Training data: a stored dataset with its validation split, or a scene to
/// draw new topologies from every epoch.
pub enum TrainData<'a> {
    Fixed { train: &'a Dataset, val: &'a Dataset },
    Fresh { scene: &'a Scene },
}

/// Splits off the last `val_samples` samples (at most a fifth of the set) for
/// validation.
pub fn split_validation(dataset: &Dataset, val_samples: usize) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 2 {
        return Err(Error::Contract("need at least 2 samples to hold out a validation set".into()));
    }
    let n_val = val_samples.min(dataset.len() / 5).max(1);
    let cut = dataset.len() - n_val;
    Ok((dataset.select(0..cut), dataset.select(cut..dataset.len())))
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Where checkpoints and `metrics.csv` go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub resume: bool,
    pub workers: usize,
    pub progress: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: u64,
    pub train_loss: f64,
    pub val: Option<ErrorSummary>,
}

impl MetricsRow {
    pub fn csv(&self) -> String {
        match self.val {
            Some(v) => format!("{},{},{},{}", self.epoch, self.train_loss, v.median, v.p90),
            None => format!("{},{},,", self.epoch, self.train_loss),
        }
    }
}

pub const METRICS_COLUMNS: &str = "epoch,train_loss,val_median_m,val_p90_m";
pub const LATEST_CHECKPOINT: &str = "checkpoint.cmck";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn epoch_checkpoint_name(epoch: u64) -> String {
    format!("epoch_{epoch:04}.cmck")
}

pub struct FitOutput {
    pub trainer: Trainer,
    pub history: Vec<MetricsRow>,
    /// Validation errors before the first update; absent on resumed runs.
    pub initial: Option<ErrorSummary>,
    pub dataset_checksum: Option<String>,
}

fn metrics_header(model: &ModelConfig, train: &TrainConfig, initial: Option<ErrorSummary>) -> String {
    let mut s = String::from("# cmanet training metrics\n");
    let _ = writeln!(s, "# model: {}", serde_json::to_string(model).unwrap_or_default());
    let _ = writeln!(s, "# train: {}", serde_json::to_string(train).unwrap_or_default());
    let _ = writeln!(s, "# percentiles: linear interpolation between closest ranks");
    if let Some(v) = initial {
        let _ = writeln!(s, "# initial val_median_m={} val_p90_m={} val_mean_m={}", v.median, v.p90, v.mean);
    }
    let _ = writeln!(s, "{METRICS_COLUMNS}");
    s
}

/// Keeps the header lines and the rows of epochs up to `epoch`.
fn truncate_metrics(text: &str, epoch: u64) -> String {
    let mut out = String::new();
    for line in text.lines() {
        let keep = match line.split(',').next().and_then(|f| f.parse::<u64>().ok()) {
            Some(e) => e <= epoch,
            None => true,
        };
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn append(path: &Path, line: &str) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Runs the configured number of epochs, validating every `val_every` epochs
/// and after the last one.
pub fn fit(model: &ModelConfig, train: &TrainConfig, data: TrainData<'_>, opts: &FitOptions) -> Result<FitOutput> {
    model.validate()?;
    train.validate()?;
    let fresh_val;
    let (val, norm, dataset_checksum) = match data {
        TrainData::Fixed { train: ds, val } => {
            check_compatible(model, ds)?;
            check_compatible(model, val)?;
            (val, Normalizer::from_header(&ds.header), Some(checksum(&ds.to_bytes())))
        }
        TrainData::Fresh { scene } => {
            fresh_val = generate_dataset(scene, train.val_samples, derive_seed(train.seed, VALIDATION_TAG, 0), opts.workers)?;
            check_compatible(model, &fresh_val)?;
            (&fresh_val, Normalizer::from_header(&fresh_val.header), None)
        }
    };

    let latest = opts.out_dir.as_ref().map(|d| d.join(LATEST_CHECKPOINT));
    let metrics = opts.out_dir.as_ref().map(|d| d.join(METRICS_FILE));
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let resumed = match &latest {
        Some(p) if opts.resume && p.exists() => Some(read_checkpoint(p)?),
        _ => None,
    };
    let (mut trainer, initial) = match resumed {
        Some(ck) => {
            if &ck.model != model {
                return Err(Error::Config("checkpoint model config differs from the requested one".into()));
            }
            if !ck.train.as_ref().is_some_and(|t| t.same_run(train)) {
                return Err(Error::Config("checkpoint training config differs from the requested one".into()));
            }
            if ck.normalizer != norm || ck.dataset_checksum != dataset_checksum {
                return Err(Error::Config("checkpoint was trained on different data".into()));
            }
            let t = Trainer::from_checkpoint(ck, train.clone())?;
            if let Some(m) = &metrics {
                let text = std::fs::read_to_string(m).unwrap_or_default();
                std::fs::write(m, truncate_metrics(&text, t.epoch)).map_err(|e| Error::io(m, e))?;
            }
            (t, None)
        }
        None => {
            let t = Trainer::new(model.clone(), train.clone(), norm)?;
            let initial = t.validate(val, opts.workers)?;
            if let Some(m) = &metrics {
                std::fs::write(m, metrics_header(model, train, Some(initial))).map_err(|e| Error::io(m, e))?;
            }
            (t, Some(initial))
        }
    };
    trainer.set_workers(opts.workers);

    let mut history = Vec::new();
    while trainer.epoch < train.epochs as u64 {
        let epoch = trainer.epoch + 1;
        let loss = match data {
            TrainData::Fixed { train: ds, .. } => trainer.train_epoch(&ds.samples)?,
            TrainData::Fresh { scene } => {
                let fresh = fresh_epoch_data(scene, train, epoch, opts.workers)?;
                trainer.train_epoch(&fresh.samples)?
            }
        };
        let is_val = epoch % train.val_every as u64 == 0 || epoch == train.epochs as u64;
        let val_summary = if is_val { Some(trainer.validate(val, opts.workers)?) } else { None };
        let row = MetricsRow {
            epoch,
            train_loss: loss,
            val: val_summary,
        };
        if let (Some(dir), Some(latest)) = (&opts.out_dir, &latest) {
            let ck = trainer.checkpoint(dataset_checksum.clone());
            if is_val {
                write_checkpoint(&dir.join(epoch_checkpoint_name(epoch)), &ck)?;
            }
            write_checkpoint(latest, &ck)?;
        }
        if let Some(m) = &metrics {
            append(m, &row.csv())?;
        }
        if opts.progress {
            eprintln!("{}", row.csv());
        }
        history.push(row);
    }
    Ok(FitOutput {
        trainer,
        history,
        initial,
        dataset_checksum,
    })
}
