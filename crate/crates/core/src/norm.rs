//! Feature z-scoring, fitted globally on the train split or per speaker.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::sessions::Split;

pub const NORM_EPSILON: f64 = 1e-8;
pub const GLOBAL_KEY: &str = "global";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// One set of statistics from train-split rows, applied to every split.
    Standard,
    /// Each speaker normalized with its own statistics, dev/test included.
    Speaker,
}

impl NormMode {
    pub const ALL: [NormMode; 2] = [NormMode::Standard, NormMode::Speaker];

    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::Standard => "standard",
            NormMode::Speaker => "speaker",
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standard" => Ok(NormMode::Standard),
            "speaker" => Ok(NormMode::Speaker),
            other => Err(format!("unknown normalization `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
}

impl ColumnStats {
    fn from_rows(rows: &[&[f64]], dim: usize) -> Option<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        for r in rows {
            n += 1;
            sum.iter_mut().zip(r.iter()).for_each(|(s, v)| *s += v);
        }
        if n == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((acc, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        Some(ColumnStats { mean, std })
    }

    pub fn constant_columns(&self, epsilon: f64) -> Vec<bool> {
        self.std.iter().map(|s| *s < epsilon).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mode: NormMode,
    pub epsilon: f64,
    /// Keyed by [`GLOBAL_KEY`] in standard mode, by speaker id otherwise.
    pub stats: BTreeMap<String, ColumnStats>,
}

impl NormStats {
    /// Fits statistics over the valid rows of the relevant population.
    pub fn fit<'a, I>(sequences: I, mode: NormMode) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a FeatureSequence, Split)>,
    {
        let items: Vec<(&FeatureSequence, Split)> = sequences.into_iter().collect();
        let dim = items.first().map_or(0, |(s, _)| s.dim);
        if items.iter().any(|(s, _)| s.dim != dim) {
            return Err(Error::Shape("sequences disagree on feature dimension".into()));
        }
        let mut stats = BTreeMap::new();
        match mode {
            NormMode::Standard => {
                let rows = items
                    .iter()
                    .filter(|(_, split)| *split == Split::Train)
                    .flat_map(|(s, _)| s.valid_rows())
                    .collect::<Vec<_>>();
                let col = ColumnStats::from_rows(&rows, dim).ok_or_else(|| {
                    Error::Invalid("standard normalization needs at least one train row".into())
                })?;
                stats.insert(GLOBAL_KEY.to_string(), col);
            }
            NormMode::Speaker => {
                let mut by_speaker: BTreeMap<&str, Vec<&FeatureSequence>> = BTreeMap::new();
                for (s, _) in &items {
                    by_speaker.entry(s.speaker_id.as_str()).or_default().push(s);
                }
                if by_speaker.is_empty() {
                    return Err(Error::Invalid("speaker normalization needs sequences".into()));
                }
                for (speaker, seqs) in by_speaker {
                    let rows: Vec<&[f64]> = seqs.iter().flat_map(|s| s.valid_rows()).collect();
                    let col = ColumnStats::from_rows(&rows, dim).ok_or_else(|| {
                        Error::Invalid(format!("speaker {speaker} has no valid rows"))
                    })?;
                    stats.insert(speaker.to_string(), col);
                }
            }
        }
        Ok(NormStats {
            mode,
            epsilon: NORM_EPSILON,
            stats,
        })
    }

    pub fn stats_for(&self, speaker_id: &str) -> Result<&ColumnStats> {
        let key = match self.mode {
            NormMode::Standard => GLOBAL_KEY,
            NormMode::Speaker => speaker_id,
        };
        self.stats.get(key).ok_or_else(|| {
            Error::Invalid(format!("no normalization statistics for speaker `{speaker_id}`"))
        })
    }

    /// `(x − mean) / max(std, ε)` on valid rows; padding rows are left as is.
    pub fn transform(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        let col = self.stats_for(&seq.speaker_id)?;
        if col.mean.len() != seq.dim {
            return Err(Error::Shape(format!(
                "statistics have {} columns, sequence has {}",
                col.mean.len(),
                seq.dim
            )));
        }
        let mut out = seq.clone();
        for t in 0..seq.valid_len {
            for ((v, m), s) in out.row_mut(t).iter_mut().zip(&col.mean).zip(&col.std) {
                *v = (*v - m) / s.max(self.epsilon);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(speaker: &str, col: &[f64]) -> FeatureSequence {
        let rows: Vec<Vec<f64>> = col.iter().map(|v| vec![*v, 5.0]).collect();
        FeatureSequence::from_rows(speaker, &rows).unwrap()
    }

    fn col_moments(s: &FeatureSequence, c: usize) -> (f64, f64) {
        let v: Vec<f64> = s.valid_rows().map(|r| r[c]).collect();
        (crate::util::mean(&v), crate::util::std_dev(&v))
    }

    #[test]
    fn standard_fit_population_std() {
        let a = seq("a", &[0.0, 2.0]);
        let stats = NormStats::fit([(&a, Split::Train)], NormMode::Standard).unwrap();
        let g = &stats.stats[GLOBAL_KEY];
        assert_eq!((g.mean[0], g.std[0]), (1.0, 1.0));
        assert_eq!((g.mean[1], g.std[1]), (5.0, 0.0));
        assert_eq!(g.constant_columns(NORM_EPSILON), vec![false, true]);

        let out = stats.transform(&a).unwrap();
        assert_eq!(out.row(0), &[-1.0, 0.0]);
        assert_eq!(out.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn standard_ignores_non_train_rows() {
        let a = seq("a", &[0.0, 2.0]);
        let b = seq("b", &[100.0, 300.0]);
        let stats =
            NormStats::fit([(&a, Split::Train), (&b, Split::Test)], NormMode::Standard).unwrap();
        assert_eq!(stats.stats[GLOBAL_KEY].mean[0], 1.0);
        assert!(NormStats::fit([(&b, Split::Dev)], NormMode::Standard).is_err());
    }

    #[test]
    fn speaker_mode_keys_and_errors() {
        let a = seq("a", &[1.0, 1.0]);
        let b = seq("b", &[7.0, 7.0]);
        let stats =
            NormStats::fit([(&a, Split::Train), (&b, Split::Test)], NormMode::Speaker).unwrap();
        assert_eq!(stats.stats.len(), 2);
        assert_ne!(stats.stats["a"], stats.stats["b"]);
        let stranger = seq("c", &[1.0]);
        assert!(stats.transform(&stranger).is_err());
        assert_eq!(stats.transform(&b).unwrap().row(0), &[0.0, 0.0]);
    }

    #[test]
    fn padding_rows_are_untouched() {
        let a = seq("a", &[0.0, 2.0]).padded(2);
        let stats = NormStats::fit([(&a, Split::Train)], NormMode::Standard).unwrap();
        assert_eq!(stats.stats[GLOBAL_KEY].mean[0], 1.0);
        let out = stats.transform(&a).unwrap();
        assert_eq!(out.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn json_round_trip() {
        let a = seq("a", &[0.0, 2.0, 3.0]);
        let stats = NormStats::fit([(&a, Split::Train)], NormMode::Speaker).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("norm.json");
        stats.save(&p).unwrap();
        assert_eq!(NormStats::load(&p).unwrap(), stats);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"a\""));
    }

    proptest! {
        #[test]
        fn speaker_mode_zero_mean_unit_std(
            a in prop::collection::vec(-50.0f64..50.0, 3..40),
            b in prop::collection::vec(-5.0f64..500.0, 3..40),
        ) {
            let sa = seq("a", &a);
            let sb = seq("b", &b);
            let stats = NormStats::fit([(&sa, Split::Train), (&sb, Split::Dev)], NormMode::Speaker).unwrap();
            for s in [&sa, &sb] {
                let constant = stats.stats[&s.speaker_id].std[0] < NORM_EPSILON;
                let out = stats.transform(s).unwrap();
                let (m, sd) = col_moments(&out, 0);
                prop_assert!(m.abs() < 1e-6);
                if !constant {
                    prop_assert!((sd - 1.0).abs() < 1e-4);
                }
            }
        }

        #[test]
        fn refit_is_idempotent(a in prop::collection::vec(-50.0f64..50.0, 2..30)) {
            let sa = seq("a", &a);
            let once = NormStats::fit([(&sa, Split::Train)], NormMode::Standard).unwrap().transform(&sa).unwrap();
            let twice = NormStats::fit([(&once, Split::Train)], NormMode::Standard).unwrap().transform(&once).unwrap();
            for (x, y) in once.data.iter().zip(&twice.data) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn affine_inputs_normalize_alike(a in prop::collection::vec(-50.0f64..50.0, 3..30), scale in 0.5f64..20.0, shift in -100.0f64..100.0) {
            let sa = seq("a", &a);
            let moved = seq("a", &a.iter().map(|v| scale * v + shift).collect::<Vec<_>>());
            let n1 = NormStats::fit([(&sa, Split::Train)], NormMode::Standard).unwrap().transform(&sa).unwrap();
            let n2 = NormStats::fit([(&moved, Split::Train)], NormMode::Standard).unwrap().transform(&moved).unwrap();
            if crate::util::std_dev(&a) > 1e-3 {
                for t in 0..a.len() {
                    prop_assert!((n1.row(t)[0] - n2.row(t)[0]).abs() < 1e-6);
                }
            }
        }
    }
}
