//! Error statistics, the subcarrier accumulation curve, the hotspot grid and
//! the paired variant comparison.

mod ablate;
mod hotspot;
mod stats;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablate::{ablate, Ablation, AblationReport, AblationSummary};
pub use hotspot::{hotspot_grid, hotspot_grid_for, HotspotGrid};
pub use stats::{error_cdf, euclidean_error, mean, percentile, spearman, summarize, ErrorSummary};

use crate::channel::{with_workers, Vec3};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict, ModelConfig, ModelParams, Normalizer, Variant};

pub const PERCENTILE_CONVENTION: &str =
    "linear interpolation between closest ranks, position q/100*(n-1) in the ascending sort";

/// Model estimates after every subcarrier, in meters, with the true positions.
#[derive(Clone, Debug)]
pub struct Predictions {
    pub per_subcarrier: Vec<Vec<Vec3>>,
    pub truth: Vec<Vec3>,
}

impl Predictions {
    pub fn subcarriers(&self) -> usize {
        self.per_subcarrier.first().map_or(0, Vec::len)
    }

    /// Errors of the estimate after subcarrier `k` (1-based).
    pub fn errors_at(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.subcarriers() {
            return Err(Error::Contract(format!("subcarrier {k} outside 1..={}", self.subcarriers())));
        }
        Ok(self
            .per_subcarrier
            .iter()
            .zip(&self.truth)
            .map(|(est, t)| euclidean_error(est[k - 1], *t))
            .collect())
    }

    pub fn final_errors(&self) -> Result<Vec<f64>> {
        self.errors_at(self.subcarriers())
    }
}

pub fn check_compatible(cfg: &ModelConfig, dataset: &Dataset) -> Result<()> {
    let h = &dataset.header;
    let data = (h.bs_count, h.antenna_count, h.subcarriers);
    let model = (cfg.bs_count, cfg.antennas, cfg.subcarriers);
    if data != model {
        return Err(Error::Config(format!(
            "dataset has (L, M, N) = {data:?} but the model expects {model:?}"
        )));
    }
    Ok(())
}

/// Runs the model over every sample, in parallel on `workers` threads.
pub fn predict_dataset(
    params: &ModelParams,
    cfg: &ModelConfig,
    norm: &Normalizer,
    dataset: &Dataset,
    workers: usize,
) -> Result<Predictions> {
    check_compatible(cfg, dataset)?;
    if dataset.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty dataset".into()));
    }
    let per_subcarrier = with_workers(workers, || {
        dataset
            .samples
            .par_iter()
            .map(|s| predict(params, cfg, norm, &s.csi))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Predictions {
        per_subcarrier,
        truth: dataset.samples.iter().map(|s| s.position).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub median_m: f64,
    pub p90_m: f64,
    pub mean_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub checkpoint_id: String,
    pub dataset_checksum: String,
    pub model: ModelConfig,
    pub samples: usize,
    pub percentile_convention: String,
    pub median_m: f64,
    pub p90_m: f64,
    pub mean_m: f64,
    /// Constant predictor at the center of the UE volume.
    pub centroid_baseline: BaselineSummary,
    /// `[error_m, cumulative probability]` at every distinct error.
    pub cdf: Vec<[f64; 2]>,
    pub errors_m: Vec<f64>,
}

/// Errors of always answering the center of the UE volume.
pub fn centroid_errors(dataset: &Dataset) -> Vec<f64> {
    let c = dataset.header.ue_volume.center();
    dataset.samples.iter().map(|s| euclidean_error(c, s.position)).collect()
}

pub fn build_report(
    preds: &Predictions,
    dataset: &Dataset,
    cfg: &ModelConfig,
    checkpoint_id: &str,
    dataset_checksum: &str,
) -> Result<EvalReport> {
    let errors = preds.final_errors()?;
    let s = summarize(&errors)?;
    let b = summarize(&centroid_errors(dataset))?;
    Ok(EvalReport {
        variant: cfg.variant,
        checkpoint_id: checkpoint_id.to_string(),
        dataset_checksum: dataset_checksum.to_string(),
        model: cfg.clone(),
        samples: errors.len(),
        percentile_convention: PERCENTILE_CONVENTION.to_string(),
        median_m: s.median,
        p90_m: s.p90,
        mean_m: s.mean,
        centroid_baseline: BaselineSummary {
            median_m: b.median,
            p90_m: b.p90,
            mean_m: b.mean,
        },
        cdf: error_cdf(&errors)?.into_iter().map(|(v, p)| [v, p]).collect(),
        errors_m: errors,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Contract(format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_error_m: f64,
}

/// Mean error of the intermediate estimate every `stride` subcarriers, plus
/// the final subcarrier.
pub fn accumulation_curve(preds: &Predictions, stride: usize) -> Result<Vec<CurvePoint>> {
    if stride == 0 {
        return Err(Error::Contract("curve stride must be at least 1".into()));
    }
    let n = preds.subcarriers();
    let mut ks: Vec<usize> = (stride..n).step_by(stride).collect();
    ks.push(n);
    ks.into_iter()
        .map(|k| {
            Ok(CurvePoint {
                k,
                mean_error_m: mean(&preds.errors_at(k)?)?,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("k,mean_error_m\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.k, p.mean_error_m);
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
