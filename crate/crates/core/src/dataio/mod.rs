//! Bit-exact persistence for datasets, checkpoints and configuration files.

mod checkpoint;
mod config;
mod dataset;

pub use dataset::{
    checksum, file_checksum, read_dataset, rms_scale, write_dataset, Dataset, DatasetHeader, Sample, DATASET_MAGIC,
    DATASET_VERSION,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{read_config, ConfigFile, EvalConfig, ModelSection, ResolvedConfig, SceneSection};
