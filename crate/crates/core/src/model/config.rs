use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the encoder scales attention outputs by the channel-gain mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Cma,
    Plain,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cma => "cma",
            Variant::Plain => "plain",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cma" => Ok(Variant::Cma),
            "plain" => Ok(Variant::Plain),
            other => Err(Error::Config(format!("unknown model variant {other:?} (expected cma or plain)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub bs_count: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    /// Attention projection width.
    pub d_k: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub variant: Variant,
}

impl ModelConfig {
    /// Desk-scale defaults for the given CSI shape.
    pub fn new(bs_count: usize, antennas: usize, subcarriers: usize) -> Self {
        Self {
            bs_count,
            antennas,
            subcarriers,
            d_k: (2 * antennas * subcarriers).min(128),
            lstm_hidden: 64,
            mlp_hidden: 64,
            variant: Variant::Cma,
        }
    }

    /// `2MN`, the per-station embedding width.
    pub fn embed_dim(&self) -> usize {
        2 * self.antennas * self.subcarriers
    }

    /// `2ML`, the decoder input width per subcarrier.
    pub fn decoder_input(&self) -> usize {
        2 * self.antennas * self.bs_count
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("bs_count", self.bs_count),
            ("antennas", self.antennas),
            ("subcarriers", self.subcarriers),
            ("d_k", self.d_k),
            ("lstm_hidden", self.lstm_hidden),
            ("mlp_hidden", self.mlp_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be at least 1")));
            }
        }
        Ok(())
    }
}
