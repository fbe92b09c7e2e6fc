//! Checkpoint file.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "CMCK"
//! 4       4      u32 format version (1)
//! 8       8      u64 manifest length in bytes
//! 16      ...    manifest, UTF-8 JSON
//! then           f64 little-endian blobs at the manifest's byte offsets,
//!                counted from the end of the manifest
//! ```
//!
//! Blobs hold the parameters under their own names and, when present, the
//! Adam moments under `adam.m/<name>` and `adam.v/<name>`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::model::{ModelConfig, ModelParams, Normalizer, PARAM_NAMES};
use crate::numeric::Tensor;
use crate::train::{OptimizerState, TrainConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CMCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 16;

/// Where the shuffling stream of the next epoch starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub normalizer: Normalizer,
    pub epoch: u64,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
    pub rng: Option<RngState>,
    pub dataset_checksum: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    model: ModelConfig,
    train: Option<TrainConfig>,
    normalizer: Normalizer,
    epoch: u64,
    rng: Option<RngState>,
    dataset_checksum: Option<String>,
    optimizer_step: Option<u64>,
    blobs: Vec<BlobEntry>,
}

fn moment_name(kind: &str, name: &str) -> String {
    format!("adam.{kind}/{name}")
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blobs: Vec<(String, Vec<usize>, &[f64])> = self
            .params
            .named()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data()))
            .collect();
        if let Some(opt) = &self.optimizer {
            for (kind, moments) in [("m", &opt.m), ("v", &opt.v)] {
                for ((n, t), data) in self.params.named().zip(moments) {
                    blobs.push((moment_name(kind, n), t.shape().to_vec(), data));
                }
            }
        }
        let mut offset = 0u64;
        let entries = blobs
            .iter()
            .map(|(name, shape, data)| {
                let e = BlobEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                };
                offset += 8 * data.len() as u64;
                e
            })
            .collect();
        let manifest = Manifest {
            model: self.model.clone(),
            train: self.train.clone(),
            normalizer: self.normalizer.clone(),
            epoch: self.epoch,
            rng: self.rng,
            dataset_checksum: self.dataset_checksum.clone(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            blobs: entries,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &blobs {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
        let fail = |kind: FormatError| Error::format(path, kind);
        let truncated = |expected: usize| {
            fail(FormatError::Truncated {
                expected: expected as u64,
                found: bytes.len() as u64,
            })
        };
        if bytes.len() < 4 {
            return Err(truncated(PREAMBLE));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != CHECKPOINT_MAGIC {
            return Err(fail(FormatError::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            }));
        }
        if bytes.len() < PREAMBLE {
            return Err(truncated(PREAMBLE));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(fail(FormatError::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            }));
        }
        let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let blob_start = usize::try_from(manifest_len)
            .ok()
            .and_then(|n| n.checked_add(PREAMBLE))
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| truncated(PREAMBLE.saturating_add(manifest_len as usize)))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[PREAMBLE..blob_start])
            .map_err(|e| fail(FormatError::Manifest(e.to_string())))?;
        manifest
            .model
            .validate()
            .map_err(|e| fail(FormatError::Manifest(e.to_string())))?;

        // every expected blob exactly once, with the shape the config implies
        let shapes = ModelParams::shapes(&manifest.model);
        let mut expected: HashMap<String, Vec<usize>> = HashMap::new();
        for (n, s) in PARAM_NAMES.iter().zip(&shapes) {
            expected.insert(n.to_string(), s.clone());
            if manifest.optimizer_step.is_some() {
                expected.insert(moment_name("m", n), s.clone());
                expected.insert(moment_name("v", n), s.clone());
            }
        }
        let mut seen: HashMap<&str, &BlobEntry> = HashMap::new();
        for e in &manifest.blobs {
            let Some(shape) = expected.get(&e.name) else {
                return Err(fail(FormatError::Manifest(format!("unexpected blob {:?}", e.name))));
            };
            if &e.shape != shape {
                return Err(fail(FormatError::Shape(format!(
                    "{} has shape {:?}, model config implies {:?}",
                    e.name, e.shape, shape
                ))));
            }
            if seen.insert(&e.name, e).is_some() {
                return Err(fail(FormatError::Manifest(format!("blob {:?} listed twice", e.name))));
            }
        }
        if let Some(missing) = expected.keys().find(|k| !seen.contains_key(k.as_str())) {
            return Err(fail(FormatError::Manifest(format!("missing blob {missing:?}"))));
        }

        let mut spans: Vec<(u64, u64, &str)> = manifest
            .blobs
            .iter()
            .map(|e| (e.offset, e.offset + 8 * e.shape.iter().product::<usize>() as u64, e.name.as_str()))
            .collect();
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(fail(FormatError::Shape(format!("blobs {} and {} overlap", w[0].2, w[1].2))));
            }
        }
        let blob_bytes = spans.last().map_or(0, |s| s.1) as usize;
        let total = blob_start + blob_bytes;
        if bytes.len() < total {
            return Err(truncated(total));
        }
        if bytes.len() > total {
            return Err(fail(FormatError::Shape(format!(
                "{} trailing bytes after the last blob",
                bytes.len() - total
            ))));
        }

        let blob = |name: &str| -> Vec<f64> {
            let e = seen[name];
            let start = blob_start + e.offset as usize;
            let n = e.shape.iter().product::<usize>();
            bytes[start..start + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        };
        let tensors = PARAM_NAMES
            .iter()
            .zip(&shapes)
            .map(|(n, s)| Tensor::new(s.clone(), blob(n)))
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_tensors(&manifest.model, tensors)?;
        let optimizer = manifest.optimizer_step.map(|step| OptimizerState {
            m: PARAM_NAMES.iter().map(|n| blob(&moment_name("m", n))).collect(),
            v: PARAM_NAMES.iter().map(|n| blob(&moment_name("v", n))).collect(),
            step,
        });
        Ok(Checkpoint {
            model: manifest.model,
            train: manifest.train,
            normalizer: manifest.normalizer,
            epoch: manifest.epoch,
            params,
            optimizer,
            rng: manifest.rng,
            dataset_checksum: manifest.dataset_checksum,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn id(&self) -> String {
        super::checksum(&self.to_bytes())
    }
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a half-written checkpoint.
pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, ck.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::channel::Aabb;
    use crate::model::Variant;

    fn sample() -> Checkpoint {
        let model = ModelConfig {
            d_k: 3,
            lstm_hidden: 4,
            mlp_hidden: 5,
            ..ModelConfig::new(2, 1, 3)
        };
        let params = ModelParams::init(&model, 9).unwrap();
        let mut optimizer = OptimizerState::new(&params);
        optimizer.step = 7;
        optimizer.m[2][1] = 0.125;
        optimizer.v[10][0] = 1e-300;
        Checkpoint {
            model,
            train: Some(TrainConfig {
                learning_rate: 0.1 + 0.2,
                ..TrainConfig::default()
            }),
            normalizer: Normalizer {
                input_scale: 1.0 / 3.0,
                volume: Aabb {
                    min: [0.0, -0.1, 0.0],
                    max: [200.0, 200.0, 30.0],
                },
            },
            epoch: 7,
            params,
            optimizer: Some(optimizer),
            rng: Some(RngState { seed: 1, next_epoch: 8 }),
            dataset_checksum: Some("00ff".into()),
        }
    }

    fn path() -> PathBuf {
        PathBuf::from("test.cmck")
    }

    fn kind(bytes: &[u8]) -> FormatError {
        match Checkpoint::from_bytes(bytes, &path()) {
            Err(Error::Format { kind, .. }) => kind,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, &path()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);

        let plain = Checkpoint {
            optimizer: None,
            train: None,
            rng: None,
            model: ModelConfig {
                variant: Variant::Plain,
                ..ck.model.clone()
            },
            ..ck
        };
        assert_eq!(Checkpoint::from_bytes(&plain.to_bytes(), &path()).unwrap(), plain);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cmck");
        write_checkpoint(&p, &sample()).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), sample());
        assert!(matches!(read_checkpoint(&dir.path().join("none")), Err(Error::Io { .. })));
    }

    #[test]
    fn distinct_diagnostics() {
        let bytes = sample().to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(kind(&bad), FormatError::BadMagic { .. }));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(kind(&bad), FormatError::Version { found: 2, .. }));

        assert!(matches!(kind(&bytes[..bytes.len() - 8]), FormatError::Truncated { .. }));
        assert!(matches!(kind(&bytes[..10]), FormatError::Truncated { .. }));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(kind(&long), FormatError::Shape(_)));
    }

    fn with_manifest(edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
        let bytes = sample().to_bytes();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        edit(&mut manifest);
        let json = serde_json::to_vec(&manifest).unwrap();
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&bytes[16 + len..]);
        out
    }

    #[test]
    fn manifest_contradictions_are_rejected() {
        let dropped = with_manifest(|m| {
            m["blobs"].as_array_mut().unwrap().remove(0);
        });
        assert!(matches!(kind(&dropped), FormatError::Manifest(_)));

        let reshaped = with_manifest(|m| m["model"]["d_k"] = 4.into());
        assert!(matches!(kind(&reshaped), FormatError::Shape(_)));

        let overlapping = with_manifest(|m| m["blobs"][1]["offset"] = 8.into());
        assert!(matches!(kind(&overlapping), FormatError::Shape(_)));

        assert!(matches!(kind(&with_manifest(|m| m["extra"] = 1.into())), FormatError::Manifest(_)));
    }
}
