//! Binary dataset file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size   field
//! 0       4      magic "CSID"
//! 4       4      u32 format version (1)
//! 8       4      u32 L (base stations)
//! 12      4      u32 M (antennas per station)
//! 16      4      u32 N (subcarriers)
//! 20      4      u32 reserved, zero
//! 24      8      u64 sample count
//! 32      8      f64 carrier frequency, Hz
//! 40      8      f64 subcarrier spacing, Hz
//! 48      8      f64 input normalization scale (RMS of the CSI components)
//! 56      8      u64 generator seed
//! 64      24     3 × f64 UE volume minimum corner, m
//! 88      24     3 × f64 UE volume maximum corner, m
//! 112     24·L   L × 3 × f64 base-station positions, m
//! then per sample:
//!         24     3 × f64 true UE position, m
//!         8·LMN  L·M·N × (f32 re, f32 im), subcarrier index fastest
//! ```

use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::channel::{Aabb, CsiTensor, Vec3};
use crate::error::{Error, FormatError, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CSID";
pub const DATASET_VERSION: u32 = 1;
const FIXED_HEADER: usize = 112;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub bs_count: usize,
    pub antenna_count: usize,
    pub subcarriers: usize,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub scale: f64,
    pub seed: u64,
    pub ue_volume: Aabb,
    pub bs_positions: Vec<Vec3>,
}

impl DatasetHeader {
    fn header_len(&self) -> usize {
        FIXED_HEADER + 24 * self.bs_count
    }

    fn record_len(&self) -> usize {
        24 + 8 * self.bs_count * self.antenna_count * self.subcarriers
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub position: Vec3,
    pub csi: CsiTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

/// RMS of all real and imaginary CSI components.
pub fn rms_scale(samples: &[Sample]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        for z in s.csi.data() {
            sum += z.re * z.re + z.im * z.im;
        }
        count += 2 * s.csi.data().len();
    }
    if count == 0 {
        return 1.0;
    }
    (sum / count as f64).sqrt()
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Subset by index, header kept.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Dataset {
        Dataset {
            header: self.header.clone(),
            samples: indices.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(h.header_len() + self.samples.len() * h.record_len());
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        for v in [h.bs_count, h.antenna_count, h.subcarriers] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for v in [h.carrier_hz, h.subcarrier_spacing_hz, h.scale] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&h.seed.to_le_bytes());
        for v in h.ue_volume.min.iter().chain(&h.ue_volume.max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &h.bs_positions {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for s in &self.samples {
            for v in s.position {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for z in s.csi.data() {
                out.extend_from_slice(&(z.re as f32).to_le_bytes());
                out.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
        out
    }

    /// Parses and validates a dataset image; `path` only labels diagnostics.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Dataset> {
        let fmt = |kind| Error::format(path, kind);
        let truncated = |expected: usize| {
            fmt(FormatError::Truncated {
                expected: expected as u64,
                found: bytes.len() as u64,
            })
        };
        if bytes.len() < 8 {
            return Err(truncated(FIXED_HEADER));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != DATASET_MAGIC {
            return Err(fmt(FormatError::BadMagic {
                expected: DATASET_MAGIC,
                found: magic,
            }));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32();
        if version != DATASET_VERSION {
            return Err(fmt(FormatError::Version {
                found: version,
                supported: DATASET_VERSION,
            }));
        }
        if bytes.len() < FIXED_HEADER {
            return Err(truncated(FIXED_HEADER));
        }
        let bs_count = r.u32() as usize;
        let antenna_count = r.u32() as usize;
        let subcarriers = r.u32() as usize;
        let _reserved = r.u32();
        let count = r.u64();
        if bs_count == 0 || antenna_count == 0 || subcarriers == 0 {
            return Err(fmt(FormatError::Shape(format!(
                "zero dimension in L={bs_count} M={antenna_count} N={subcarriers}"
            ))));
        }
        let carrier_hz = r.f64();
        let subcarrier_spacing_hz = r.f64();
        let scale = r.f64();
        let seed = r.u64();
        let min = [r.f64(), r.f64(), r.f64()];
        let max = [r.f64(), r.f64(), r.f64()];

        let mut header = DatasetHeader {
            bs_count,
            antenna_count,
            subcarriers,
            carrier_hz,
            subcarrier_spacing_hz,
            scale,
            seed,
            ue_volume: Aabb { min, max },
            bs_positions: Vec::new(),
        };
        let record = header.record_len() as u128;
        let expected = header.header_len() as u128 + record * count as u128;
        if (bytes.len() as u128) < expected {
            return Err(fmt(FormatError::Truncated {
                expected: expected.min(u64::MAX as u128) as u64,
                found: bytes.len() as u64,
            }));
        }
        if (bytes.len() as u128) > expected {
            return Err(fmt(FormatError::Shape(format!(
                "{} trailing bytes after {count} declared samples",
                bytes.len() as u128 - expected
            ))));
        }
        header.bs_positions = (0..bs_count).map(|_| [r.f64(), r.f64(), r.f64()]).collect();

        let per = bs_count * antenna_count * subcarriers;
        let mut samples = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let position = [r.f64(), r.f64(), r.f64()];
            let data = (0..per)
                .map(|_| {
                    let re = r.f32() as f64;
                    let im = r.f32() as f64;
                    Complex64::new(re, im)
                })
                .collect();
            let csi = CsiTensor::from_vec(bs_count, antenna_count, subcarriers, data)?;
            samples.push(Sample { position, csi });
        }
        Ok(Dataset { header, samples })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> [u8; K] {
        let out = self.bytes[self.pos..self.pos + K].try_into().unwrap();
        self.pos += K;
        out
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::write(path, dataset.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_bytes(&bytes, path)
}

/// Hex SHA-256 of a byte image.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_checksum(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(checksum(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let header = DatasetHeader {
            bs_count: 2,
            antenna_count: 1,
            subcarriers: 2,
            carrier_hz: 3.5e9,
            subcarrier_spacing_hz: 15e3,
            scale: 0.25,
            seed: 11,
            ue_volume: Aabb {
                min: [0.0; 3],
                max: [1.0, 2.0, 3.0],
            },
            bs_positions: vec![[0.0, 0.0, 1.0], [5.0, 5.0, 1.0]],
        };
        let samples = (0..3)
            .map(|i| Sample {
                position: [i as f64, 0.5, 0.25],
                csi: CsiTensor::from_vec(
                    2,
                    1,
                    2,
                    (0..4).map(|k| Complex64::new(k as f64 * 0.5 + i as f64, -0.25)).collect(),
                )
                .unwrap(),
            })
            .collect();
        Dataset { header, samples }
    }

    #[test]
    fn round_trip_rewrites_identical_bytes() {
        let d = tiny();
        let bytes = d.to_bytes();
        assert_eq!(bytes.len(), 112 + 48 + 3 * (24 + 32));
        let back = Dataset::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_magic_version_and_length_are_distinct() {
        let bytes = tiny().to_bytes();
        let p = Path::new("mem");
        let kind = |b: &[u8]| match Dataset::from_bytes(b, p) {
            Err(Error::Format { kind, .. }) => kind,
            other => panic!("expected format error, got {other:?}"),
        };

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(kind(&bad), FormatError::BadMagic { .. }));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(kind(&bad), FormatError::Version { found: 9, .. }));

        assert!(matches!(kind(&bytes[..bytes.len() - 1]), FormatError::Truncated { .. }));
        assert!(matches!(kind(&bytes[..50]), FormatError::Truncated { .. }));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(kind(&long), FormatError::Shape(_)));

        // header claims more samples than the bytes hold
        let mut bad = bytes.clone();
        bad[24] = 4;
        assert!(matches!(kind(&bad), FormatError::Truncated { .. }));

        let mut bad = bytes;
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(kind(&bad), FormatError::Shape(_)));
    }

    #[test]
    fn rms_of_known_values() {
        let d = tiny();
        let manual: f64 = d
            .samples
            .iter()
            .flat_map(|s| s.csi.data().iter().map(|z| z.norm_sqr()))
            .sum::<f64>()
            / 24.0;
        assert_eq!(rms_scale(&d.samples), manual.sqrt());
    }
}
