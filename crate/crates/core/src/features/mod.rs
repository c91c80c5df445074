//! Windowed acoustic features: 1 s windows with a 0.5 s hop, each
//! summarized by the functionals of [`FeatureRegistry`].

mod cache;
pub mod lld;
mod registry;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, CANONICAL_RATE};
use crate::error::{Error, Result};

pub use cache::{read_cache, read_sidecar, write_cache, CacheSidecar, CACHE_MAGIC, CACHE_VERSION};
pub use lld::{FrameAnalyzer, FrameLld, Lld};
pub use registry::{
    aggregate_functionals, FeatureDescriptor, FeatureRegistry, Family, Functional, Population,
    FEATURE_DIM, REGISTRY_VERSION,
};

pub const WINDOW_S: f64 = 1.0;
pub const HOP_S: f64 = 0.5;
pub const WINDOW_SAMPLES: usize = CANONICAL_RATE as usize;
pub const HOP_SAMPLES: usize = WINDOW_SAMPLES / 2;

/// A T×d feature matrix in row-major order.
///
/// Rows past `valid_len` are padding and are ignored by every consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub speaker_id: String,
    pub rows: usize,
    pub dim: usize,
    pub valid_len: usize,
    pub data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(speaker_id: impl Into<String>, rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "feature data has {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite feature at row {}, column {}",
                i / dim.max(1),
                i % dim.max(1)
            )));
        }
        Ok(FeatureSequence {
            speaker_id: speaker_id.into(),
            rows,
            dim,
            valid_len: rows,
            data,
        })
    }

    pub fn from_rows(speaker_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(speaker_id, rows.len(), dim, rows.concat())
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn valid_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.valid_len)
    }

    /// Appends `extra` rows of padding (zeros) beyond the valid length.
    pub fn padded(&self, extra: usize) -> Self {
        let mut out = self.clone();
        out.data.resize((self.rows + extra) * self.dim, 0.0);
        out.rows += extra;
        out
    }

    /// Keeps at most `max_rows` rows, dropping the tail.
    pub fn truncated(&self, max_rows: usize) -> Self {
        if self.rows <= max_rows {
            return self.clone();
        }
        let mut out = self.clone();
        out.rows = max_rows;
        out.valid_len = self.valid_len.min(max_rows);
        out.data.truncate(max_rows * self.dim);
        out
    }

    pub fn column_mean(&self, col: usize) -> f64 {
        let n = self.valid_len.max(1) as f64;
        self.valid_rows().map(|r| r[col]).sum::<f64>() / n
    }
}

/// Number of 1 s windows at a 0.5 s hop; the final partial window is zero-padded.
pub fn window_count(duration_s: f64) -> usize {
    if duration_s <= WINDOW_S {
        return 1;
    }
    // the epsilon absorbs representation error in sample-count durations
    ((duration_s - WINDOW_S) / HOP_S + 1e-9).floor() as usize + 1
}

fn window_count_samples(n: usize) -> usize {
    if n <= WINDOW_SAMPLES {
        1
    } else {
        (n - WINDOW_SAMPLES) / HOP_SAMPLES + 1
    }
}

/// Per-frame descriptors of a single window (zero-padded to 1 s).
pub fn extract_lld(window: &[f64]) -> Vec<FrameLld> {
    let mut padded = window[..window.len().min(WINDOW_SAMPLES)].to_vec();
    padded.resize(WINDOW_SAMPLES, 0.0);
    FrameAnalyzer::new().analyze_window(&padded)
}

/// Full feature sequence of canonical (16 kHz) audio.
///
/// Window `w` covers samples `[w * 8000, w * 8000 + 16000)`; windows run in
/// parallel but every row depends only on its own slice, so the output is
/// deterministic.
pub fn extract_sequence(
    buf: &AudioBuffer,
    registry: &FeatureRegistry,
    speaker_id: &str,
) -> Result<FeatureSequence> {
    if buf.sample_rate != CANONICAL_RATE {
        return Err(Error::Invalid(format!(
            "feature extraction expects {CANONICAL_RATE} Hz audio, got {} Hz",
            buf.sample_rate
        )));
    }
    let windows = window_count_samples(buf.samples.len());
    let rows: Vec<Vec<f64>> = (0..windows)
        .into_par_iter()
        .map_init(FrameAnalyzer::new, |analyzer, w| {
            let start = w * HOP_SAMPLES;
            let mut slice = vec![0.0; WINDOW_SAMPLES];
            let end = (start + WINDOW_SAMPLES).min(buf.samples.len());
            if start < end {
                slice[..end - start].copy_from_slice(&buf.samples[start..end]);
            }
            let frames = analyzer.analyze_window(&slice);
            aggregate_functionals(&frames, registry)
        })
        .collect();
    FeatureSequence::from_rows(speaker_id, &rows)
}
