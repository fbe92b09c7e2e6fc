//! TOML run configuration with `scene`, `model`, `train` and `eval` sections
//! and a top-level `seed`. Every key is optional; missing keys fall back to
//! the scene preset and the built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{BaseStation, Scene, Vec3};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    /// `desk` (default) or `full`.
    pub preset: Option<String>,
    pub ue_min: Option<Vec3>,
    pub ue_max: Option<Vec3>,
    /// Station positions; arrays are aimed at the center of the UE volume.
    pub base_stations: Option<Vec<Vec3>>,
    pub array_rows: Option<usize>,
    pub array_cols: Option<usize>,
    pub array_spacing_wavelengths: Option<f64>,
    pub carrier_hz: Option<f64>,
    pub subcarrier_spacing_hz: Option<f64>,
    pub subcarriers: Option<usize>,
    pub paths: Option<usize>,
    pub los: Option<bool>,
    pub scatter_margin_m: Option<f64>,
    pub reflection_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<Variant>,
    pub d_k: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub mlp_hidden: Option<usize>,
}

impl ModelSection {
    /// Model config for a dataset of shape `(L, M, N)`.
    pub fn config_for(&self, bs_count: usize, antennas: usize, subcarriers: usize) -> Result<ModelConfig> {
        let base = ModelConfig::new(bs_count, antennas, subcarriers);
        let cfg = ModelConfig {
            variant: self.variant.unwrap_or(base.variant),
            d_k: self.d_k.unwrap_or(base.d_k),
            lstm_hidden: self.lstm_hidden.unwrap_or(base.lstm_hidden),
            mlp_hidden: self.mlp_hidden.unwrap_or(base.mlp_hidden),
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Subcarriers between accumulation-curve points.
    pub stride: usize,
    pub cell_size_m: f64,
    pub test_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            stride: 12,
            cell_size_m: 10.0,
            test_samples: 2_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub scene: SceneSection,
    pub model: ModelSection,
    pub train: Option<TrainConfig>,
    pub eval: EvalConfig,
}

/// A fully merged configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub scene: Scene,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ResolvedConfig {
    /// The merged configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unprintable config: {e}\n"))
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let s = &self.scene;
        let mut scene = match s.preset.as_deref().unwrap_or("desk") {
            "desk" => Scene::desk(),
            "full" => Scene::full_scale(),
            other => return Err(Error::Config(format!("unknown scene preset {other:?} (expected desk or full)"))),
        };
        if let Some(v) = s.ue_min {
            scene.ue_volume.min = v;
        }
        if let Some(v) = s.ue_max {
            scene.ue_volume.max = v;
        }
        if let Some(sites) = &s.base_stations {
            scene.base_stations = sites
                .iter()
                .map(|p| BaseStation {
                    position: *p,
                    azimuth_rad: 0.0,
                })
                .collect();
        }
        scene.aim_at_center();
        if let Some(v) = s.array_rows {
            scene.array.rows = v;
        }
        if let Some(v) = s.array_cols {
            scene.array.cols = v;
        }
        if let Some(v) = s.array_spacing_wavelengths {
            scene.array.spacing_wavelengths = v;
        }
        if let Some(v) = s.carrier_hz {
            scene.carrier_hz = v;
        }
        if let Some(n) = s.subcarriers {
            // keep the preset bandwidth unless the spacing is given too
            if s.subcarrier_spacing_hz.is_none() && n > 0 {
                scene.subcarrier_spacing_hz *= scene.n_subcarriers as f64 / n as f64;
            }
            scene.n_subcarriers = n;
        }
        if let Some(v) = s.subcarrier_spacing_hz {
            scene.subcarrier_spacing_hz = v;
        }
        if let Some(v) = s.paths {
            scene.path_count = v;
        }
        if let Some(v) = s.los {
            scene.los_enabled = v;
        }
        if let Some(v) = s.scatter_margin_m {
            scene.scatter_margin_m = v;
        }
        if let Some(v) = s.reflection_range {
            scene.reflection_range = v;
        }

        let mut train = self.train.clone().unwrap_or_default();
        let train_seed_given = self.train.as_ref().is_some_and(|t| t.seed != TrainConfig::default().seed);
        let seed = match self.seed {
            Some(top) if train_seed_given && train.seed != top => {
                return Err(Error::Config(format!(
                    "top-level seed {top} contradicts train.seed {}",
                    train.seed
                )));
            }
            Some(top) => top,
            None => train.seed,
        };
        train.seed = seed;
        scene.seed = seed;

        let resolved = ResolvedConfig {
            seed,
            scene,
            model: self.model.clone(),
            train,
            eval: self.eval.clone(),
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.train.validate()?;
        if self.eval.stride < 1 {
            return Err(Error::Config("eval stride must be at least 1".into()));
        }
        if !(self.eval.cell_size_m > 0.0) {
            return Err(Error::Config("eval cell size must be positive".into()));
        }
        Ok(())
    }

    /// Defaults without any file.
    pub fn defaults() -> ResolvedConfig {
        ConfigFile::default().resolve().expect("built-in defaults are valid")
    }
}

pub fn read_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConfigFile::parse(&text)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_desk_preset() {
        let r = ConfigFile::parse("").unwrap().resolve().unwrap();
        assert_eq!(r.scene, Scene::desk());
        assert_eq!(r.train, TrainConfig::default());
        assert_eq!(r.eval, EvalConfig::default());
        assert_eq!(r, ResolvedConfig::defaults());
    }

    #[test]
    fn sections_override_the_preset() {
        let text = r#"
            seed = 7

            [scene]
            preset = "full"
            subcarriers = 144
            paths = 3
            los = false
            base_stations = [[-10.0, -10.0, 20.0], [230.0, 310.0, 20.0]]

            [model]
            variant = "plain"
            lstm_hidden = 32

            [train]
            epochs = 3
            learning_rate = 0.002

            [eval]
            stride = 6
        "#;
        let r = ConfigFile::parse(text).unwrap().resolve().unwrap();
        assert_eq!(r.seed, 7);
        assert_eq!(r.train.seed, 7);
        assert_eq!(r.scene.n_subcarriers, 144);
        // bandwidth is kept when only the count changes
        assert!((r.scene.subcarrier_spacing_hz * 144.0 - 20e6).abs() < 1e-6);
        assert_eq!(r.scene.bs_count(), 2);
        assert!(!r.scene.los_enabled);
        assert_eq!(r.train.epochs, 3);
        assert_eq!(r.train.batch_size, 32);
        assert_eq!(r.eval.stride, 6);
        let m = r.model.config_for(2, 8, 144).unwrap();
        assert_eq!((m.variant, m.lstm_hidden, m.d_k), (Variant::Plain, 32, 128));

        let echoed: ResolvedConfig = toml::from_str(&r.echo()).unwrap();
        assert_eq!(echoed, r);
        assert!(r.echo().contains("learning_rate = 0.002"));
    }

    #[test]
    fn contradictions_and_typos_are_config_errors() {
        for text in [
            "seed = 1\n[train]\nseed = 2\n",
            "[scene]\nsubcarrier = 8\n",
            "[scene]\npreset = \"huge\"\n",
            "[train]\nepochs = 0\n",
            "[scene]\nue_min = [0.0, 0.0, 50.0]\n",
            "[model]\nvariant = \"dense\"\n",
        ] {
            let r = ConfigFile::parse(text).and_then(|c| c.resolve());
            assert!(matches!(r, Err(Error::Config(_))), "{text:?} gave {r:?}");
        }
        assert!(ConfigFile::parse("seed = 3\n[train]\nseed = 3\n").unwrap().resolve().is_ok());
    }
}
