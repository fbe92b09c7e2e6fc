use serde::{Deserialize, Serialize};

use super::{build_report, predict_dataset, EvalReport};
use crate::dataio::{checksum, Dataset};
use crate::error::Result;
use crate::model::{ModelConfig, Variant};
use crate::train::{fit, FitOptions, FitOutput, TrainConfig, TrainData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub dataset_checksum: String,
    pub test_checksum: String,
    pub cma_median_m: f64,
    pub plain_median_m: f64,
    pub centroid_median_m: f64,
    /// `plain − cma`; positive when masking helps.
    pub median_delta_m: f64,
    pub mean_delta_m: f64,
    pub cma_beats_plain: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cma: EvalReport,
    pub plain: EvalReport,
    pub summary: AblationSummary,
}

pub struct Ablation {
    pub report: AblationReport,
    pub cma: FitOutput,
    pub plain: FitOutput,
}

/// Trains the masked and unmasked variants with the same seed, data and
/// hyperparameters, then evaluates both on `test`. Each variant writes into
/// its own subdirectory of the output directory.
pub fn ablate(
    train_set: &Dataset,
    val_set: &Dataset,
    test: &Dataset,
    model: &ModelConfig,
    train: &TrainConfig,
    opts: &FitOptions,
) -> Result<Ablation> {
    let train_checksum = checksum(&train_set.to_bytes());
    let test_checksum = checksum(&test.to_bytes());
    let run = |variant: Variant| -> Result<(EvalReport, FitOutput)> {
        let cfg = ModelConfig { variant, ..model.clone() };
        let sub = FitOptions {
            out_dir: opts.out_dir.as_ref().map(|d| d.join(variant.to_string())),
            ..opts.clone()
        };
        let out = fit(&cfg, train, TrainData::Fixed { train: train_set, val: val_set }, &sub)?;
        let t = &out.trainer;
        let preds = predict_dataset(&t.params, &t.model, &t.norm, test, opts.workers)?;
        let id = t.checkpoint(out.dataset_checksum.clone()).id();
        let mut report = build_report(&preds, test, &cfg, &id, &test_checksum)?;
        // the training set identifies the controlled comparison
        report.dataset_checksum = train_checksum.clone();
        Ok((report, out))
    };
    let (cma_report, cma) = run(Variant::Cma)?;
    let (plain_report, plain) = run(Variant::Plain)?;
    let summary = AblationSummary {
        dataset_checksum: train_checksum.clone(),
        test_checksum: test_checksum.clone(),
        cma_median_m: cma_report.median_m,
        plain_median_m: plain_report.median_m,
        centroid_median_m: cma_report.centroid_baseline.median_m,
        median_delta_m: plain_report.median_m - cma_report.median_m,
        mean_delta_m: plain_report.mean_m - cma_report.mean_m,
        cma_beats_plain: cma_report.median_m < plain_report.median_m,
    };
    Ok(Ablation {
        report: AblationReport {
            cma: cma_report,
            plain: plain_report,
            summary,
        },
        cma,
        plain,
    })
}
