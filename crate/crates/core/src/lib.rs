//! Multi-base-station CSI positioning: a parametric multipath OFDM channel
//! simulator, the channel-masked attention encoder with a frequency-cumulative
//! LSTM decoder, its training loop, and the evaluation harness.

// `!(x > 0.0)` style checks reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, FormatError, Result};
