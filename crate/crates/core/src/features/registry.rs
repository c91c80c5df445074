//! The fixed 88-entry window feature registry and its functionals.

use serde::{Deserialize, Serialize};

use super::lld::{FrameLld, Lld, FRAME_HOP_S};
use crate::util::{mean, percentile_sorted, std_dev};

pub const REGISTRY_VERSION: &str = "sv88-1";
pub const FEATURE_DIM: usize = 88;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Frequency,
    Energy,
    Spectral,
    Temporal,
}

/// Which frames a functional is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    All,
    Voiced,
    VoicedPair,
    Unvoiced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Mean,
    /// Standard deviation over |mean|; 0 when the mean vanishes.
    CoefVar,
    Percentile(f64),
    /// p80 − p20.
    PercentileRange,
    RisingSlopeMean,
    RisingSlopeStd,
    FallingSlopeMean,
    FallingSlopeStd,
    VoicedFraction,
    VoicedSegmentMean,
    VoicedSegmentStd,
    UnvoicedSegmentMean,
    UnvoicedSegmentStd,
    /// Local loudness maxima per second.
    PeakRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub family: Family,
    pub lld: Option<Lld>,
    pub functional: Functional,
    pub population: Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub version: String,
    pub entries: Vec<FeatureDescriptor>,
}

fn family_of(lld: Lld) -> Family {
    match lld {
        Lld::F0
        | Lld::Jitter
        | Lld::F1Freq
        | Lld::F1Bandwidth
        | Lld::F2Freq
        | Lld::F2Bandwidth
        | Lld::F3Freq
        | Lld::F3Bandwidth => Family::Frequency,
        Lld::Shimmer | Lld::Loudness | Lld::Hnr => Family::Energy,
        _ => Family::Spectral,
    }
}

fn default_population(lld: Lld) -> Population {
    if lld.needs_voiced_pair() {
        Population::VoicedPair
    } else if lld.voiced_only() {
        Population::Voiced
    } else {
        Population::All
    }
}

fn functional_suffix(f: Functional) -> String {
    match f {
        Functional::Mean => "amean".into(),
        Functional::CoefVar => "stddevNorm".into(),
        Functional::Percentile(p) => format!("percentile{p:.1}"),
        Functional::PercentileRange => "pctlrange0-2".into(),
        Functional::RisingSlopeMean => "meanRisingSlope".into(),
        Functional::RisingSlopeStd => "stddevRisingSlope".into(),
        Functional::FallingSlopeMean => "meanFallingSlope".into(),
        Functional::FallingSlopeStd => "stddevFallingSlope".into(),
        Functional::VoicedFraction => "voicedFraction".into(),
        Functional::VoicedSegmentMean => "MeanVoicedSegmentLengthSec".into(),
        Functional::VoicedSegmentStd => "StddevVoicedSegmentLengthSec".into(),
        Functional::UnvoicedSegmentMean => "MeanUnvoicedSegmentLength".into(),
        Functional::UnvoicedSegmentStd => "StddevUnvoicedSegmentLength".into(),
        Functional::PeakRate => "loudnessPeaksPerSec".into(),
    }
}

impl FeatureDescriptor {
    fn lld(lld: Lld, functional: Functional, population: Population) -> Self {
        let pop = match population {
            Population::Unvoiced => "_uv",
            _ => "",
        };
        FeatureDescriptor {
            name: format!("{}{pop}_{}", lld.name(), functional_suffix(functional)),
            family: family_of(lld),
            lld: Some(lld),
            functional,
            population,
        }
    }

    fn temporal(functional: Functional) -> Self {
        FeatureDescriptor {
            name: functional_suffix(functional),
            family: Family::Temporal,
            lld: None,
            functional,
            population: Population::All,
        }
    }
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl FeatureRegistry {
    /// The 88-dimensional registry: 22 descriptors × {mean, CoV}, then
    /// percentiles, slopes, temporal statistics and unvoiced-region means.
    pub fn standard() -> Self {
        use Functional::*;
        let mut e = Vec::with_capacity(FEATURE_DIM);
        for lld in Lld::ALL {
            let pop = default_population(lld);
            e.push(FeatureDescriptor::lld(lld, Mean, pop));
            e.push(FeatureDescriptor::lld(lld, CoefVar, pop));
        }
        for lld in [Lld::F0, Lld::Loudness] {
            let pop = default_population(lld);
            for f in [
                Percentile(20.0),
                Percentile(50.0),
                Percentile(80.0),
                PercentileRange,
                RisingSlopeMean,
                RisingSlopeStd,
                FallingSlopeMean,
                FallingSlopeStd,
            ] {
                e.push(FeatureDescriptor::lld(lld, f, pop));
            }
        }
        for f in [
            VoicedFraction,
            VoicedSegmentMean,
            VoicedSegmentStd,
            UnvoicedSegmentMean,
            UnvoicedSegmentStd,
            PeakRate,
        ] {
            e.push(FeatureDescriptor::temporal(f));
        }
        for lld in [
            Lld::AlphaRatio,
            Lld::Hammarberg,
            Lld::Slope0To500,
            Lld::Slope500To1500,
            Lld::SpectralFlux,
            Lld::Loudness,
        ] {
            e.push(FeatureDescriptor::lld(lld, Mean, Population::Unvoiced));
        }
        let tri = [Percentile(20.0), Percentile(50.0), Percentile(80.0)];
        for (lld, fs) in [
            (Lld::Hnr, &tri[..]),
            (Lld::Jitter, &tri[1..2]),
            (Lld::Shimmer, &tri[1..2]),
            (Lld::AlphaRatio, &tri[..]),
            (Lld::Hammarberg, &tri[..]),
            (Lld::SpectralCentroid, &tri[..]),
            (Lld::F1Freq, &tri[1..2]),
            (Lld::F2Freq, &tri[1..2]),
        ] {
            for &f in fs {
                e.push(FeatureDescriptor::lld(lld, f, default_population(lld)));
            }
        }
        debug_assert_eq!(e.len(), FEATURE_DIM);
        FeatureRegistry {
            version: REGISTRY_VERSION.to_string(),
            entries: e,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }
}

fn in_population(f: &FrameLld, pop: Population) -> bool {
    match pop {
        Population::All => true,
        Population::Voiced => f.voiced,
        Population::VoicedPair => f.voiced_pair,
        Population::Unvoiced => !f.voiced,
    }
}

/// Frame-to-frame slopes (units per second) over runs of consecutive
/// population members.
fn slopes(frames: &[FrameLld], lld: Lld, pop: Population) -> Vec<f64> {
    frames
        .windows(2)
        .filter(|w| in_population(&w[0], pop) && in_population(&w[1], pop))
        .map(|w| (lld.value(&w[1]) - lld.value(&w[0])) / FRAME_HOP_S)
        .collect()
}

/// Lengths in seconds of maximal runs with `voiced == want`.
fn segment_lengths(frames: &[FrameLld], want: bool) -> Vec<f64> {
    let mut out = Vec::new();
    let mut run = 0usize;
    for f in frames {
        if f.voiced == want {
            run += 1;
        } else if run > 0 {
            out.push(run as f64 * FRAME_HOP_S);
            run = 0;
        }
    }
    if run > 0 {
        out.push(run as f64 * FRAME_HOP_S);
    }
    out
}

fn coef_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    if m.abs() < 1e-12 {
        0.0
    } else {
        std_dev(xs) / m.abs()
    }
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// Computes one value per registry entry from a window's frame descriptors.
/// Empty populations yield 0.
pub fn aggregate_functionals(frames: &[FrameLld], registry: &FeatureRegistry) -> Vec<f64> {
    let duration = frames.len() as f64 * FRAME_HOP_S;
    registry
        .entries
        .iter()
        .map(|entry| {
            let value = match (entry.functional, entry.lld) {
                (Functional::VoicedFraction, _) => {
                    if frames.is_empty() {
                        0.0
                    } else {
                        frames.iter().filter(|f| f.voiced).count() as f64 / frames.len() as f64
                    }
                }
                (Functional::VoicedSegmentMean, _) => mean(&segment_lengths(frames, true)),
                (Functional::VoicedSegmentStd, _) => std_dev(&segment_lengths(frames, true)),
                (Functional::UnvoicedSegmentMean, _) => mean(&segment_lengths(frames, false)),
                (Functional::UnvoicedSegmentStd, _) => std_dev(&segment_lengths(frames, false)),
                (Functional::PeakRate, _) => {
                    let peaks = frames
                        .windows(3)
                        .filter(|w| {
                            w[1].loudness_db > w[0].loudness_db
                                && w[1].loudness_db >= w[2].loudness_db
                        })
                        .count();
                    if duration > 0.0 {
                        peaks as f64 / duration
                    } else {
                        0.0
                    }
                }
                (f, Some(lld)) => {
                    let values: Vec<f64> = frames
                        .iter()
                        .filter(|fr| in_population(fr, entry.population))
                        .map(|fr| lld.value(fr))
                        .collect();
                    match f {
                        Functional::Mean => mean(&values),
                        Functional::CoefVar => coef_var(&values),
                        Functional::Percentile(p) => {
                            let mut v = values;
                            v.sort_by(f64::total_cmp);
                            percentile_sorted(&v, p)
                        }
                        Functional::PercentileRange => {
                            let mut v = values;
                            v.sort_by(f64::total_cmp);
                            percentile_sorted(&v, 80.0) - percentile_sorted(&v, 20.0)
                        }
                        Functional::RisingSlopeMean
                        | Functional::RisingSlopeStd
                        | Functional::FallingSlopeMean
                        | Functional::FallingSlopeStd => {
                            let s = slopes(frames, lld, entry.population);
                            let rising = matches!(
                                f,
                                Functional::RisingSlopeMean | Functional::RisingSlopeStd
                            );
                            let sel: Vec<f64> = s
                                .into_iter()
                                .filter(|v| if rising { *v > 0.0 } else { *v < 0.0 })
                                .collect();
                            if matches!(
                                f,
                                Functional::RisingSlopeMean | Functional::FallingSlopeMean
                            ) {
                                mean(&sel)
                            } else {
                                std_dev(&sel)
                            }
                        }
                        _ => 0.0,
                    }
                }
                (_, None) => 0.0,
            };
            finite_or_zero(value)
        })
        .collect()
}
