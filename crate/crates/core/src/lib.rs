//! Speech-based stress indicator regression.
//!
//! The crate covers the whole pipeline from session metadata and raw
//! recordings to trained sequence regressors:
//!
//! - [`sessions`]: session metadata, stress-change targets and their scaling
//! - [`audio`]: WAV decoding, resampling to 16 kHz and peak normalization
//! - [`features`]: windowed acoustic features (1 s windows, 0.5 s hop, 88 dims)
//! - [`norm`]: global or per-speaker z-scoring
//! - [`model`]: GRU encoder with mean or attention pooling and STL/MTL heads
//! - [`train`]: BPTT gradients, Nesterov SGD and early stopping
//! - [`eval`]: MAE, the configuration grid, attention reports, histograms
//! - [`synth`]: deterministic synthetic corpora with planted couplings
//! - [`cli`]: the `stress-voice` command-line entry point
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod audio;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod norm;
pub mod sessions;
pub mod synth;
pub mod train;
mod util;

pub use error::{Error, Result};
