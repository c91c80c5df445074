//! In-memory corpus of feature sequences with split labels and scaled targets.
//!
//! Reads of test-split examples through [`Dataset::get`] are counted so
//! that training and model selection can be checked to never touch them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::features::{read_cache, FeatureSequence};
use crate::norm::{NormMode, NormStats};
use crate::sessions::{build_targets, ScalingParams, SessionRecord, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: FeatureSequence,
    pub split: Split,
    /// Scaled targets in head order (cortisol, appraisal, affect).
    pub targets: [f64; 3],
}

#[derive(Debug, Default)]
pub struct Dataset {
    examples: Vec<Example>,
    test_reads: AtomicUsize,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset::new(self.examples.clone())
    }
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Dataset {
            examples,
            test_reads: AtomicUsize::new(0),
        }
    }

    /// Joins sessions with their cached features (`<dir>/<speaker_id>.ftrs`)
    /// and builds train-fitted scaled targets.
    pub fn from_cache(records: &[SessionRecord], feature_dir: &Path) -> Result<(Self, ScalingParams)> {
        let (scaling, targets) = build_targets(records)?;
        let mut examples = Vec::with_capacity(records.len());
        for (rec, tv) in records.iter().zip(targets) {
            let path = feature_dir.join(format!("{}.ftrs", rec.speaker_id));
            let seq = read_cache(&path, &rec.speaker_id)?;
            examples.push(Example {
                seq,
                split: rec.split,
                targets: tv.scaled,
            });
        }
        Ok((Dataset::new(examples), scaling))
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Indices of a split; does not read example contents.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.examples[i].split
    }

    pub fn get(&self, i: usize) -> &Example {
        let e = &self.examples[i];
        if e.split == Split::Test {
            self.test_reads.fetch_add(1, Ordering::Relaxed);
        }
        e
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::Relaxed)
    }

    pub fn dim(&self) -> Result<usize> {
        let dim = self
            .examples
            .first()
            .map(|e| e.seq.dim)
            .ok_or_else(|| Error::Invalid("empty dataset".into()))?;
        if self.examples.iter().any(|e| e.seq.dim != dim) {
            return Err(Error::Shape("examples disagree on feature dimension".into()));
        }
        Ok(dim)
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut m = BTreeMap::new();
        for e in &self.examples {
            *m.entry(e.split).or_insert(0) += 1;
        }
        m
    }

    pub fn fit_norm(&self, mode: NormMode) -> Result<NormStats> {
        NormStats::fit(self.examples.iter().map(|e| (&e.seq, e.split)), mode)
    }

    /// Applies normalization to every example. The result has a fresh access counter.
    pub fn normalized(&self, stats: &NormStats) -> Result<Dataset> {
        let examples = self
            .examples
            .iter()
            .map(|e| {
                Ok(Example {
                    seq: stats.transform(&e.seq)?,
                    split: e.split,
                    targets: e.targets,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(examples))
    }

    /// Preprocessing access to all examples (normalization, export); not counted.
    pub fn examples_unchecked(&self) -> &[Example] {
        &self.examples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(split: Split, v: f64) -> Example {
        Example {
            seq: FeatureSequence::from_rows(format!("{split}{v}"), &[vec![v, 1.0]]).unwrap(),
            split,
            targets: [0.5; 3],
        }
    }

    #[test]
    fn test_reads_are_counted() {
        let ds = Dataset::new(vec![
            example(Split::Train, 1.0),
            example(Split::Dev, 2.0),
            example(Split::Test, 3.0),
        ]);
        assert_eq!(ds.indices(Split::Test), vec![2]);
        ds.get(0);
        ds.get(1);
        assert_eq!(ds.test_reads(), 0);
        ds.get(2);
        assert_eq!(ds.test_reads(), 1);
        assert_eq!(ds.clone().test_reads(), 0);
        assert_eq!(ds.dim().unwrap(), 2);
    }
}
