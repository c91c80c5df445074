//! Deterministic synthetic corpora with planted acoustic-to-target couplings.
//!
//! Two generators:
//! * [`synth_audio_corpus`] writes WAV files and a sessions CSV. Each speaker
//!   has three latent controls in [-1, 1]: mean pitch offset, mean loudness
//!   offset and the pitch glide over the first half of the session. Raw target
//!   deltas are a linear map of the latents plus noise, and the questionnaire
//!   and cortisol columns are back-solved so the session formulas return them.
//! * [`synth_feature_corpus`] skips the DSP and plants scaled targets directly
//!   in designated feature columns.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioBuffer};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::sessions::{write_sessions, SessionRecord, Split};
use crate::util::{create_dir, derive_seed};

/// Baseline cortisol (T1, T2) in nmol/l.
pub const CORTISOL_BASELINE: f64 = 10.0;
/// Planted deltas are rounded to this grid so that `baseline + delta` is exact.
const DELTA_QUANTUM: f64 = 1.0 / 4096.0;
const BASE_F0_HZ: f64 = 140.0;
const HARMONICS: usize = 5;
/// Pink noise level relative to the voiced signal RMS.
const NOISE_DB: f64 = -30.0;
/// Amplitude of the single-sample click at t = 0. It is the loudest sample of
/// every file, so peak normalization applies the same gain to all speakers
/// and the planted loudness offsets survive it.
const CLICK_AMPLITUDE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_speakers: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Rows are targets (cortisol, appraisal, affect); columns are the latent
    /// controls (pitch offset, loudness offset, first-half pitch glide).
    pub coupling: [[f64; 3]; 3],
    /// Std of Gaussian noise added to each raw delta.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_speakers: 27,
            duration_s: 60.0,
            sample_rate: 22_050,
            coupling: [[4.0, 1.5, 0.5], [1.0, -1.5, 0.3], [-0.8, -0.6, 0.4]],
            noise_std: 0.05,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 3 {
            return Err(Error::Invalid("synth: need at least 3 speakers (one per split)".into()));
        }
        if !(self.duration_s >= 1.0) || !self.duration_s.is_finite() {
            return Err(Error::Invalid("synth: duration_s must be at least 1 s".into()));
        }
        if self.sample_rate < 8_000 {
            return Err(Error::Invalid("synth: sample_rate below 8 kHz".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Invalid("synth: noise_std must be non-negative".into()));
        }
        let zero = self.coupling.iter().flatten().all(|c| *c == 0.0);
        if !zero && det3(&self.coupling).abs() < 1e-9 {
            return Err(Error::Invalid("synth: coupling matrix is singular".into()));
        }
        Ok(())
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Speaker split assignment in the 17/5/5 proportion of a 27-speaker corpus.
pub fn split_for(index: usize, n: usize) -> Split {
    let n_eval = ((n as f64 * 5.0 / 27.0).round() as usize).max(1);
    let n_train = n - 2 * n_eval;
    if index < n_train {
        Split::Train
    } else if index < n_train + n_eval {
        Split::Dev
    } else {
        Split::Test
    }
}

pub fn speaker_id(index: usize) -> String {
    format!("s{:02}", index + 1)
}

fn quantize(v: f64) -> f64 {
    (v / DELTA_QUANTUM).round() * DELTA_QUANTUM
}

/// Cortisol T1..T8 whose delta is exactly `delta` (for quantized `delta ≥ −9`).
pub fn cortisol_curve(delta: f64) -> [f64; 8] {
    let b = CORTISOL_BASELINE;
    // peak at T4; T5 stays close to it
    let shape = if delta >= 0.0 {
        [0.5, 1.0, 0.9, 0.6, 0.35, 0.15]
    } else {
        [1.2, 1.0, 1.1, 1.3, 1.5, 1.7]
    };
    let mut c = [b; 8];
    for (i, s) in shape.iter().enumerate() {
        c[i + 2] = if i == 1 { b + delta } else { (b + s * delta).max(0.0) };
    }
    c
}

/// Back-solves a session row from planted raw deltas.
pub fn session_from_deltas(
    speaker: &str,
    audio_path: &str,
    split: Split,
    deltas: [f64; 3],
    si_pre: f64,
    na_pre: f64,
) -> SessionRecord {
    SessionRecord {
        speaker_id: speaker.to_string(),
        audio_path: audio_path.to_string(),
        cortisol: cortisol_curve(deltas[0]),
        si_pre,
        si_post: si_pre + deltas[1],
        na_pre,
        na_post: na_pre + deltas[2],
        split,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpeaker {
    pub record: SessionRecord,
    /// Pitch offset, loudness offset, first-half glide.
    pub latents: [f64; 3],
    pub planted: [f64; 3],
}

/// Latents and session rows, without rendering audio.
pub fn plan_speakers(spec: &SynthSpec) -> Result<Vec<SynthSpeaker>> {
    spec.validate()?;
    (0..spec.n_speakers)
        .map(|i| {
            let id = speaker_id(i);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("plan-{id}")));
            let latents: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            let planted: [f64; 3] = std::array::from_fn(|t| {
                let clean: f64 = (0..3).map(|j| spec.coupling[t][j] * latents[j]).sum();
                let noise: f64 = rng.sample(StandardNormal);
                quantize(clean + spec.noise_std * noise)
            });
            if planted[0] < -9.0 {
                return Err(Error::Invalid(format!(
                    "synth: cortisol delta {} for {id} is below -9 nmol/l; reduce the coupling",
                    planted[0]
                )));
            }
            let si_pre = 2.0 + f64::from(rng.random_range(0..8u8)) / 8.0;
            let na_pre = 1.5 + f64::from(rng.random_range(0..8u8)) / 8.0;
            let record = session_from_deltas(
                &id,
                &format!("audio/{id}.wav"),
                split_for(i, spec.n_speakers),
                planted,
                si_pre,
                na_pre,
            );
            Ok(SynthSpeaker {
                record,
                latents,
                planted,
            })
        })
        .collect()
}

/// Paul Kellet's economy pink-noise filter over white noise.
struct PinkNoise {
    b: [f64; 3],
}

impl PinkNoise {
    fn next(&mut self, white: f64) -> f64 {
        self.b[0] = 0.99765 * self.b[0] + white * 0.0990460;
        self.b[1] = 0.96300 * self.b[1] + white * 0.2965164;
        self.b[2] = 0.57000 * self.b[2] + white * 1.0526913;
        (self.b[0] + self.b[1] + self.b[2] + white * 0.1848) * 0.25
    }
}

/// Renders one speaker: syllable-like voiced bursts of a 5-harmonic source
/// with small period and amplitude perturbations, over continuous pink noise.
pub fn render_speaker(spec: &SynthSpec, speaker: &SynthSpeaker) -> AudioBuffer {
    let [pitch, loud, glide] = speaker.latents;
    let sr = f64::from(spec.sample_rate);
    let n = (spec.duration_s * sr).round() as usize;
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("audio-{}", speaker.record.speaker_id)));

    let amp = 10f64.powf((6.0 * loud - 18.0) / 20.0);
    let harmonic_norm: f64 = (1..=HARMONICS).map(|k| 0.5 / (k * k) as f64).sum::<f64>().sqrt();
    let noise_rms = amp * harmonic_norm * 10f64.powf(NOISE_DB / 20.0);

    let mut out = vec![0.0; n];
    let mut pink = PinkNoise { b: [0.0; 3] };
    // pink filter output has RMS ≈ 0.37 for unit white input
    let pink_gain = noise_rms / 0.37;
    for v in out.iter_mut() {
        *v = pink_gain * pink.next(rng.sample::<f64, _>(StandardNormal));
    }

    let ramp = (0.01 * sr) as usize;
    let mut pos = 0usize;
    let mut phase = 0.0f64;
    while pos < n {
        let voiced_len = (rng.random_range(0.15..0.40) * sr) as usize;
        let pause_len = (rng.random_range(0.05..0.20) * sr) as usize;
        let end = (pos + voiced_len).min(n);
        let syl_gain = 1.0 + 0.05 * rng.random_range(-1.0..1.0);
        let mut period_left = 0.0f64;
        let (mut jit, mut shim) = (1.0, 1.0);
        for i in pos..end {
            let t = i as f64;
            let glide_oct = if i < half {
                0.25 * glide * (2.0 * t / n as f64 - 0.5)
            } else {
                0.0
            };
            // slight declination within each syllable
            let decl = 1.0 - 0.04 * (i - pos) as f64 / voiced_len as f64;
            if period_left <= 0.0 {
                jit = 1.0 + 0.004 * rng.random_range(-1.0..1.0);
                shim = 1.0 + 0.03 * rng.random_range(-1.0..1.0);
                period_left += 1.0;
            }
            let f0 = BASE_F0_HZ * 2f64.powf(0.5 * pitch + glide_oct) * decl * jit;
            phase += 2.0 * PI * f0 / sr;
            period_left -= f0 / sr;
            let env = {
                let a = (i - pos).min(ramp) as f64 / ramp as f64;
                let b = (end - 1 - i).min(ramp) as f64 / ramp as f64;
                a.min(b)
            };
            let src: f64 = (1..=HARMONICS).map(|k| (k as f64 * phase).sin() / k as f64).sum();
            out[i] += amp * syl_gain * shim * env * src;
        }
        phase %= 2.0 * PI;
        pos = end + pause_len;
    }
    out[0] = CLICK_AMPLITUDE;
    AudioBuffer::new(out, spec.sample_rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthAudioCorpus {
    pub speakers: Vec<SynthSpeaker>,
    pub sessions_path: std::path::PathBuf,
}

impl SynthAudioCorpus {
    pub fn records(&self) -> Vec<SessionRecord> {
        self.speakers.iter().map(|s| s.record.clone()).collect()
    }
}

/// Writes `<out>/audio/<speaker>.wav` and `<out>/sessions.csv`.
pub fn synth_audio_corpus(spec: &SynthSpec, out: &Path) -> Result<SynthAudioCorpus> {
    use rayon::prelude::*;
    let speakers = plan_speakers(spec)?;
    let audio_dir = out.join("audio");
    create_dir(&audio_dir)?;
    speakers
        .par_iter()
        .map(|s| write_wav(&audio_dir.join(format!("{}.wav", s.record.speaker_id)), &render_speaker(spec, s)))
        .collect::<Result<Vec<()>>>()?;
    let sessions_path = out.join("sessions.csv");
    let records: Vec<SessionRecord> = speakers.iter().map(|s| s.record.clone()).collect();
    write_sessions(&sessions_path, &records)?;
    Ok(SynthAudioCorpus {
        speakers,
        sessions_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSynthSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub seq_len: usize,
    pub dim: usize,
    /// Columns `0..signal_columns` carry the planted signal.
    pub signal_columns: usize,
    pub noise_std: f64,
    /// When set, the signal columns are pure noise in the second half of each
    /// sequence, and the last column marks the phase (+1 first half, −1 second).
    pub first_half_only: bool,
    /// Seed for the planted structure (mixing weights).
    pub structure_seed: u64,
    /// Seed for targets, noise and distractors.
    pub seed: u64,
}

impl Default for FeatureSynthSpec {
    fn default() -> Self {
        FeatureSynthSpec {
            n_train: 200,
            n_dev: 50,
            n_test: 50,
            seq_len: 100,
            dim: 20,
            signal_columns: 6,
            noise_std: 0.02,
            first_half_only: false,
            structure_seed: 0x5157,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFeatureCorpus {
    pub examples: Vec<Example>,
    /// Row-major `signal_columns × 3`; column c of a clean step is `Σ_j M[c][j] (y_j − 0.5)`.
    pub mixing: Vec<f64>,
    pub signal_columns: usize,
}

/// Mixing weights from the structure seed; rows have unit scale.
pub fn mixing_matrix(structure_seed: u64, signal_columns: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(structure_seed, "mixing"));
    loop {
        let m: Vec<f64> = (0..signal_columns * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        // the first three rows must already be well conditioned
        let top = [
            [m[0], m[1], m[2]],
            [m[3], m[4], m[5]],
            [m[6], m[7], m[8]],
        ];
        if det3(&top).abs() > 0.5 {
            return m;
        }
    }
}

/// Sequences with scaled targets uniform in [0, 1] planted in the leading columns.
pub fn synth_feature_corpus(spec: &FeatureSynthSpec) -> Result<SynthFeatureCorpus> {
    let min_dim = spec.signal_columns + usize::from(spec.first_half_only);
    if spec.signal_columns < 3 || spec.dim < min_dim {
        return Err(Error::Invalid(format!(
            "feature synth: need signal_columns ≥ 3 and dim ≥ {min_dim}"
        )));
    }
    if spec.seq_len < 2 || spec.n_train == 0 || spec.n_dev == 0 || !(spec.noise_std >= 0.0) {
        return Err(Error::Invalid("feature synth: invalid sizes or noise".into()));
    }
    let mixing = mixing_matrix(spec.structure_seed, spec.signal_columns);
    let (s, d, t_len) = (spec.signal_columns, spec.dim, spec.seq_len);
    let mut examples = Vec::with_capacity(spec.n_train + spec.n_dev + spec.n_test);
    let plan = [
        (Split::Train, spec.n_train),
        (Split::Dev, spec.n_dev),
        (Split::Test, spec.n_test),
    ];
    for (split, count) in plan {
        for i in 0..count {
            let id = format!("{split}-{i:03}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &id));
            let y: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
            let clean: Vec<f64> = (0..s)
                .map(|c| (0..3).map(|j| mixing[c * 3 + j] * (y[j] - 0.5)).sum())
                .collect();
            let mut data = vec![0.0; t_len * d];
            for t in 0..t_len {
                let first_half = t < t_len / 2;
                let row = &mut data[t * d..(t + 1) * d];
                for c in 0..d {
                    row[c] = if c < s {
                        if spec.first_half_only && !first_half {
                            rng.random_range(-1.0..1.0)
                        } else {
                            clean[c] + spec.noise_std * rng.sample::<f64, _>(StandardNormal)
                        }
                    } else {
                        rng.sample::<f64, _>(StandardNormal)
                    };
                }
                if spec.first_half_only {
                    row[d - 1] = if first_half { 1.0 } else { -1.0 };
                }
            }
            examples.push(Example {
                seq: FeatureSequence::new(id, t_len, d, data)?,
                split,
                targets: y,
            });
        }
    }
    Ok(SynthFeatureCorpus {
        examples,
        mixing,
        signal_columns: s,
    })
}
