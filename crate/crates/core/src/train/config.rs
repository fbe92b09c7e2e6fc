use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    /// One stored dataset, reshuffled every epoch.
    #[default]
    Fixed,
    /// New simulated topologies every epoch.
    Fresh,
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataMode::Fixed => "fixed",
            DataMode::Fresh => "fresh",
        })
    }
}

impl FromStr for DataMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(DataMode::Fixed),
            "fresh" => Ok(DataMode::Fresh),
            other => Err(Error::Config(format!("unknown data mode {other:?} (expected fixed or fresh)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Topologies drawn per epoch in fresh mode.
    pub samples_per_epoch: usize,
    pub val_every: usize,
    pub val_samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient norm limit.
    pub clip_norm: f64,
    pub data_mode: DataMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 140,
            samples_per_epoch: 10_000,
            val_every: 20,
            val_samples: 1_000,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            data_mode: DataMode::Fixed,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch size must be at least 1".into());
        }
        if self.val_every < 1 {
            return fail("val_every must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!("adam betas must lie in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam eps must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip norm must be positive".into());
        }
        if self.data_mode == DataMode::Fresh && (self.samples_per_epoch < 1 || self.val_samples < 1) {
            return fail("fresh mode needs samples_per_epoch and val_samples of at least 1".into());
        }
        Ok(())
    }

    /// True when two configs describe the same optimization apart from its length.
    pub fn same_run(&self, other: &TrainConfig) -> bool {
        TrainConfig { epochs: 0, ..self.clone() } == TrainConfig { epochs: 0, ..other.clone() }
    }
}
