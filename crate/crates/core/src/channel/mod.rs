//! Parametric multipath OFDM channel simulator.
//!
//! Each UE–BS link is a line-of-sight path plus single-bounce scattered paths
//! with free-space amplitudes, delay phases on every subcarrier, and planar
//! array steering evaluated at the subcarrier's own wavelength.

mod csi;
mod paths;
mod scene;

use std::path::Path;

use rayon::prelude::*;

pub use csi::{steering_vector, subcarrier_frequencies, synthesize_csi, CsiTensor};
pub use paths::{generate_paths, sample_rng, sample_ue, Path as PropagationPath, PathSet};
pub use scene::{Aabb, ArraySpec, BaseStation, Scene, Vec3, SPEED_OF_LIGHT};

use crate::dataio::{rms_scale, write_dataset, Dataset, DatasetHeader, Sample};
use crate::error::{Error, Result};

/// Sample `index` of the dataset seeded by `seed`, quantized to the on-disk
/// single precision.
pub fn generate_sample(scene: &Scene, seed: u64, index: u64) -> Result<Sample> {
    let mut rng = sample_rng(seed, index);
    let ue = sample_ue(scene, &mut rng);
    let paths = (0..scene.bs_count())
        .map(|l| generate_paths(scene, ue, l, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut csi = synthesize_csi(scene, &paths)?;
    csi.quantize_f32();
    if !csi.is_finite() {
        return Err(Error::Numeric(format!("non-finite CSI for sample {index}")));
    }
    Ok(Sample { position: ue, csi })
}

pub fn header_for(scene: &Scene, seed: u64, scale: f64) -> DatasetHeader {
    DatasetHeader {
        bs_count: scene.bs_count(),
        antenna_count: scene.antenna_count(),
        subcarriers: scene.n_subcarriers,
        carrier_hz: scene.carrier_hz,
        subcarrier_spacing_hz: scene.subcarrier_spacing_hz,
        scale,
        seed,
        ue_volume: scene.ue_volume,
        bs_positions: scene.base_stations.iter().map(|b| b.position).collect(),
    }
}

/// Generates `count` samples on `workers` threads. Every sample draws from its
/// own stream, so the result is independent of the worker count.
pub fn generate_dataset(scene: &Scene, count: usize, seed: u64, workers: usize) -> Result<Dataset> {
    scene.validate()?;
    if count == 0 {
        return Err(Error::Contract("dataset count must be at least 1".into()));
    }
    let samples = with_workers(workers, || {
        (0..count as u64)
            .into_par_iter()
            .map(|i| generate_sample(scene, seed, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let scale = rms_scale(&samples);
    Ok(Dataset {
        header: header_for(scene, seed, scale),
        samples,
    })
}

/// Generates and writes a dataset file.
pub fn build_dataset(scene: &Scene, count: usize, seed: u64, workers: usize, out: &Path) -> Result<Dataset> {
    let dataset = generate_dataset(scene, count, seed, workers)?;
    write_dataset(out, &dataset)?;
    Ok(dataset)
}

/// Runs `f` inside a rayon pool of `workers` threads (`0` = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(test)]
mod tests;
