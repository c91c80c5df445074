//! Frame-level low-level descriptors (25 ms frames, 10 ms hop).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::SMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::CANONICAL_RATE;

pub const SAMPLE_RATE: f64 = CANONICAL_RATE as f64;
pub const FRAME_LEN: usize = 400;
pub const FRAME_HOP: usize = 160;
pub const FRAME_HOP_S: f64 = FRAME_HOP as f64 / SAMPLE_RATE;
pub const SPECTRUM_FFT: usize = 512;
pub const F0_MIN_HZ: f64 = 55.0;
pub const F0_MAX_HZ: f64 = 600.0;
pub const LPC_ORDER: usize = 12;
pub const LOUDNESS_FLOOR_DB: f64 = -120.0;
/// Minimum normalized autocorrelation at the pitch lag for a voiced frame.
pub const VOICING_THRESHOLD: f64 = 0.45;

const AUTOCORR_FFT: usize = 1024;
const POWER_FLOOR: f64 = 1e-12;
const HNR_R_MAX: f64 = 0.99999;
const HNR_R_MIN: f64 = 1e-4;
/// Frames quieter than this are never voiced.
const VOICING_MIN_DB: f64 = -70.0;

/// Frame-level descriptors. Voiced-only fields are 0 on unvoiced frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameLld {
    pub voiced: bool,
    /// This frame and the previous one are both voiced.
    pub voiced_pair: bool,
    pub f0_hz: f64,
    pub jitter: f64,
    /// Absolute peak-amplitude change to the previous voiced frame, in dB.
    pub shimmer_db: f64,
    pub loudness_db: f64,
    pub hnr_db: f64,
    pub alpha_ratio_db: f64,
    pub hammarberg_db: f64,
    pub slope_0_500: f64,
    pub slope_500_1500: f64,
    pub formant_hz: [f64; 3],
    pub formant_bw_hz: [f64; 3],
    pub formant_rel_db: [f64; 3],
    pub h1_h2_db: f64,
    pub h1_a3_db: f64,
    pub spectral_flux: f64,
    pub spectral_centroid_hz: f64,
    /// Absolute peak amplitude, kept for shimmer.
    #[serde(skip)]
    pub peak_amp: f64,
}

/// The 22 low-level descriptors, in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lld {
    F0,
    Jitter,
    Shimmer,
    Loudness,
    Hnr,
    AlphaRatio,
    Hammarberg,
    Slope0To500,
    Slope500To1500,
    F1Freq,
    F1Bandwidth,
    F1RelEnergy,
    F2Freq,
    F2Bandwidth,
    F2RelEnergy,
    F3Freq,
    F3Bandwidth,
    F3RelEnergy,
    H1MinusH2,
    H1MinusA3,
    SpectralFlux,
    SpectralCentroid,
}

impl Lld {
    pub const ALL: [Lld; 22] = [
        Lld::F0,
        Lld::Jitter,
        Lld::Shimmer,
        Lld::Loudness,
        Lld::Hnr,
        Lld::AlphaRatio,
        Lld::Hammarberg,
        Lld::Slope0To500,
        Lld::Slope500To1500,
        Lld::F1Freq,
        Lld::F1Bandwidth,
        Lld::F1RelEnergy,
        Lld::F2Freq,
        Lld::F2Bandwidth,
        Lld::F2RelEnergy,
        Lld::F3Freq,
        Lld::F3Bandwidth,
        Lld::F3RelEnergy,
        Lld::H1MinusH2,
        Lld::H1MinusA3,
        Lld::SpectralFlux,
        Lld::SpectralCentroid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Lld::F0 => "F0_Hz",
            Lld::Jitter => "jitterLocal",
            Lld::Shimmer => "shimmerLocal_dB",
            Lld::Loudness => "loudness_dB",
            Lld::Hnr => "HNR_dB",
            Lld::AlphaRatio => "alphaRatio_dB",
            Lld::Hammarberg => "hammarbergIndex_dB",
            Lld::Slope0To500 => "slope0-500",
            Lld::Slope500To1500 => "slope500-1500",
            Lld::F1Freq => "F1frequency",
            Lld::F1Bandwidth => "F1bandwidth",
            Lld::F1RelEnergy => "F1amplitudeLogRelF0",
            Lld::F2Freq => "F2frequency",
            Lld::F2Bandwidth => "F2bandwidth",
            Lld::F2RelEnergy => "F2amplitudeLogRelF0",
            Lld::F3Freq => "F3frequency",
            Lld::F3Bandwidth => "F3bandwidth",
            Lld::F3RelEnergy => "F3amplitudeLogRelF0",
            Lld::H1MinusH2 => "logRelF0-H1-H2",
            Lld::H1MinusA3 => "logRelF0-H1-A3",
            Lld::SpectralFlux => "spectralFlux",
            Lld::SpectralCentroid => "spectralCentroid_Hz",
        }
    }

    /// Descriptors only meaningful on voiced frames.
    pub fn voiced_only(self) -> bool {
        !matches!(
            self,
            Lld::Loudness
                | Lld::AlphaRatio
                | Lld::Hammarberg
                | Lld::Slope0To500
                | Lld::Slope500To1500
                | Lld::SpectralFlux
                | Lld::SpectralCentroid
        )
    }

    /// Descriptors defined between consecutive voiced frames.
    pub fn needs_voiced_pair(self) -> bool {
        matches!(self, Lld::Jitter | Lld::Shimmer)
    }

    pub fn value(self, f: &FrameLld) -> f64 {
        match self {
            Lld::F0 => f.f0_hz,
            Lld::Jitter => f.jitter,
            Lld::Shimmer => f.shimmer_db,
            Lld::Loudness => f.loudness_db,
            Lld::Hnr => f.hnr_db,
            Lld::AlphaRatio => f.alpha_ratio_db,
            Lld::Hammarberg => f.hammarberg_db,
            Lld::Slope0To500 => f.slope_0_500,
            Lld::Slope500To1500 => f.slope_500_1500,
            Lld::F1Freq => f.formant_hz[0],
            Lld::F1Bandwidth => f.formant_bw_hz[0],
            Lld::F1RelEnergy => f.formant_rel_db[0],
            Lld::F2Freq => f.formant_hz[1],
            Lld::F2Bandwidth => f.formant_bw_hz[1],
            Lld::F2RelEnergy => f.formant_rel_db[1],
            Lld::F3Freq => f.formant_hz[2],
            Lld::F3Bandwidth => f.formant_bw_hz[2],
            Lld::F3RelEnergy => f.formant_rel_db[2],
            Lld::H1MinusH2 => f.h1_h2_db,
            Lld::H1MinusA3 => f.h1_a3_db,
            Lld::SpectralFlux => f.spectral_flux,
            Lld::SpectralCentroid => f.spectral_centroid_hz,
        }
    }
}

/// Number of analysis frames that fit in `n` samples.
pub fn frame_count(n: usize) -> usize {
    if n < FRAME_LEN {
        1
    } else {
        (n - FRAME_LEN) / FRAME_HOP + 1
    }
}

/// Reusable per-thread analysis state: FFT plans and window tables.
pub struct FrameAnalyzer {
    spectrum_fft: Arc<dyn Fft<f64>>,
    autocorr_fwd: Arc<dyn Fft<f64>>,
    autocorr_inv: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
    hamming: Vec<f64>,
    scratch: Vec<Complex<f64>>,
    acf_buf: Vec<Complex<f64>>,
}

impl Default for FrameAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameAnalyzer {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        let n = FRAME_LEN as f64;
        FrameAnalyzer {
            spectrum_fft: planner.plan_fft_forward(SPECTRUM_FFT),
            autocorr_fwd: planner.plan_fft_forward(AUTOCORR_FFT),
            autocorr_inv: planner.plan_fft_inverse(AUTOCORR_FFT),
            hann: (0..FRAME_LEN)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1.0)).cos())
                .collect(),
            hamming: (0..FRAME_LEN)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1.0)).cos())
                .collect(),
            scratch: vec![Complex::default(); SPECTRUM_FFT],
            acf_buf: vec![Complex::default(); AUTOCORR_FFT],
        }
    }

    /// Analyzes a 1 s window (zero-padded when shorter) into per-frame descriptors.
    pub fn analyze_window(&mut self, window: &[f64]) -> Vec<FrameLld> {
        let n = window.len().max(FRAME_LEN);
        let frames = frame_count(n);
        let mut out = Vec::with_capacity(frames);
        let mut frame = vec![0.0; FRAME_LEN];
        let mut prev_mag: Option<Vec<f64>> = None;
        for i in 0..frames {
            let start = i * FRAME_HOP;
            for (k, slot) in frame.iter_mut().enumerate() {
                *slot = window.get(start + k).copied().unwrap_or(0.0);
            }
            let (mut lld, mag) = self.analyze_frame(&frame);
            lld.spectral_flux = match &prev_mag {
                Some(prev) => spectral_flux(prev, &mag),
                None => 0.0,
            };
            prev_mag = Some(mag);
            out.push(lld);
        }
        link_voiced_pairs(&mut out);
        out
    }

    /// Single-frame analysis; returns descriptors and the normalized magnitude spectrum.
    fn analyze_frame(&mut self, frame: &[f64]) -> (FrameLld, Vec<f64>) {
        let mut lld = FrameLld::default();
        let energy = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
        lld.loudness_db = if energy > 0.0 {
            (10.0 * energy.log10()).max(LOUDNESS_FLOOR_DB)
        } else {
            LOUDNESS_FLOOR_DB
        };
        lld.peak_amp = frame.iter().fold(0.0f64, |m, x| m.max(x.abs()));

        let power = self.power_spectrum(frame);
        let bin_hz = SAMPLE_RATE / SPECTRUM_FFT as f64;
        let band_sum = |lo: f64, hi: f64| -> f64 {
            power
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = *k as f64 * bin_hz;
                    f >= lo && f < hi
                })
                .map(|(_, p)| p)
                .sum()
        };
        let band_max = |lo: f64, hi: f64| -> f64 {
            power
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = *k as f64 * bin_hz;
                    f >= lo && f < hi
                })
                .fold(0.0f64, |m, (_, p)| m.max(*p))
        };
        lld.alpha_ratio_db = db_ratio(band_sum(50.0, 1000.0), band_sum(1000.0, 5000.0));
        lld.hammarberg_db = db_ratio(band_max(0.0, 2000.0), band_max(2000.0, 5000.0));
        lld.slope_0_500 = octave_slope(&power, bin_hz, 0.0, 500.0);
        lld.slope_500_1500 = octave_slope(&power, bin_hz, 500.0, 1500.0);
        let total: f64 = power.iter().sum();
        lld.spectral_centroid_hz = if total > 0.0 {
            power
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * bin_hz * p)
                .sum::<f64>()
                / total
        } else {
            0.0
        };

        if lld.loudness_db > VOICING_MIN_DB {
            if let Some((f0, r)) = self.pitch(frame) {
                lld.voiced = true;
                lld.f0_hz = f0;
                let r = r.clamp(HNR_R_MIN, HNR_R_MAX);
                lld.hnr_db = 10.0 * (r / (1.0 - r)).log10();
            }
        }

        if lld.voiced {
            if let Some(formants) = self.formants(frame) {
                for (i, (f, bw)) in formants.into_iter().enumerate() {
                    lld.formant_hz[i] = f;
                    lld.formant_bw_hz[i] = bw;
                }
            }
            let h1 = harmonic_db(&power, bin_hz, lld.f0_hz);
            let h2 = harmonic_db(&power, bin_hz, 2.0 * lld.f0_hz);
            lld.h1_h2_db = h1 - h2;
            for i in 0..3 {
                if lld.formant_hz[i] > 0.0 {
                    lld.formant_rel_db[i] = harmonic_db(&power, bin_hz, lld.formant_hz[i]) - h1;
                }
            }
            if lld.formant_hz[2] > 0.0 {
                lld.h1_a3_db = h1 - harmonic_db(&power, bin_hz, lld.formant_hz[2]);
            }
        }

        let norm = total.sqrt();
        let mag = power
            .iter()
            .map(|p| if norm > 0.0 { p.sqrt() / norm } else { 0.0 })
            .collect();
        (lld, mag)
    }

    /// Hann-windowed power spectrum, bins 0..=N/2.
    fn power_spectrum(&mut self, frame: &[f64]) -> Vec<f64> {
        for (i, c) in self.scratch.iter_mut().enumerate() {
            let x = if i < FRAME_LEN { frame[i] * self.hann[i] } else { 0.0 };
            *c = Complex::new(x, 0.0);
        }
        self.spectrum_fft.process(&mut self.scratch);
        self.scratch[..=SPECTRUM_FFT / 2]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }

    /// Pitch from the normalized autocorrelation: the first local maximum
    /// within 90% of the best peak in the 55–600 Hz lag range, refined by
    /// parabolic interpolation. Returns `(f0, r)` for voiced frames.
    fn pitch(&mut self, frame: &[f64]) -> Option<(f64, f64)> {
        let n = frame.len();
        let mean = frame.iter().sum::<f64>() / n as f64;
        let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
        for (i, c) in self.acf_buf.iter_mut().enumerate() {
            *c = Complex::new(if i < n { x[i] } else { 0.0 }, 0.0);
        }
        self.autocorr_fwd.process(&mut self.acf_buf);
        for c in self.acf_buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.autocorr_inv.process(&mut self.acf_buf);
        let scale = 1.0 / AUTOCORR_FFT as f64;

        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + x[i] * x[i];
        }
        let total = prefix[n];
        if total <= 0.0 {
            return None;
        }

        let lag_min = (SAMPLE_RATE / F0_MAX_HZ).floor() as usize;
        let lag_max = ((SAMPLE_RATE / F0_MIN_HZ).ceil() as usize).min(n - 2);
        let r = |lag: usize| -> f64 {
            let head = prefix[n - lag];
            let tail = total - prefix[lag];
            let denom = (head * tail).sqrt();
            if denom > 0.0 {
                self.acf_buf[lag].re * scale / denom
            } else {
                0.0
            }
        };
        let values: Vec<f64> = (lag_min - 1..=lag_max + 1).map(r).collect();
        let at = |lag: usize| values[lag + 1 - lag_min];

        let peaks: Vec<usize> = (lag_min..=lag_max)
            .filter(|&l| at(l) > at(l - 1) && at(l) >= at(l + 1))
            .collect();
        let best = peaks.iter().map(|&l| at(l)).fold(f64::NEG_INFINITY, f64::max);
        if !(best >= VOICING_THRESHOLD) {
            return None;
        }
        let lag = *peaks.iter().find(|&&l| at(l) >= 0.9 * best)?;
        let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        Some((SAMPLE_RATE / (lag as f64 + delta), b))
    }

    /// First three LPC formants as (frequency, bandwidth) pairs.
    fn formants(&self, frame: &[f64]) -> Option<Vec<(f64, f64)>> {
        let mut x = vec![0.0; frame.len()];
        for i in 0..frame.len() {
            let prev = if i > 0 { frame[i - 1] } else { 0.0 };
            x[i] = (frame[i] - 0.97 * prev) * self.hamming[i];
        }
        let mut acf = [0.0; LPC_ORDER + 1];
        for (lag, slot) in acf.iter_mut().enumerate() {
            *slot = x[..x.len() - lag]
                .iter()
                .zip(&x[lag..])
                .map(|(a, b)| a * b)
                .sum();
        }
        let coeffs = levinson_durbin(&acf)?;
        let mut companion = SMatrix::<f64, LPC_ORDER, LPC_ORDER>::zeros();
        for k in 0..LPC_ORDER {
            companion[(0, k)] = -coeffs[k];
        }
        for k in 1..LPC_ORDER {
            companion[(k, k - 1)] = 1.0;
        }
        if companion.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let roots = companion.complex_eigenvalues();
        let mut candidates: Vec<(f64, f64)> = roots
            .iter()
            .filter(|z| z.im > 0.0)
            .map(|z| {
                let freq = z.im.atan2(z.re) * SAMPLE_RATE / (2.0 * PI);
                let bw = -z.norm().ln() * SAMPLE_RATE / PI;
                (freq, bw)
            })
            .filter(|&(f, bw)| f > 90.0 && f < SAMPLE_RATE / 2.0 - 90.0 && bw > 0.0 && bw < 600.0)
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        candidates.truncate(3);
        Some(candidates)
    }
}

/// Solves the LPC normal equations; returns a_1..a_p of A(z) = 1 + Σ a_k z^-k.
pub fn levinson_durbin(acf: &[f64; LPC_ORDER + 1]) -> Option<[f64; LPC_ORDER]> {
    if !(acf[0] > 1e-12) {
        return None;
    }
    let mut a = [0.0; LPC_ORDER + 1];
    a[0] = 1.0;
    let mut err = acf[0];
    for i in 1..=LPC_ORDER {
        let mut acc = acf[i];
        for j in 1..i {
            acc += a[j] * acf[i - j];
        }
        let k = -acc / err;
        let prev = a;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return None;
        }
    }
    let mut out = [0.0; LPC_ORDER];
    out.copy_from_slice(&a[1..]);
    Some(out)
}

fn db_ratio(num: f64, den: f64) -> f64 {
    10.0 * ((num + POWER_FLOOR) / (den + POWER_FLOOR)).log10()
}

/// Least-squares slope of the dB spectrum against log2 frequency (dB/octave).
fn octave_slope(power: &[f64], bin_hz: f64, lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = power
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(k, p)| {
            let f = k as f64 * bin_hz;
            (f > lo && f <= hi).then(|| (f.log2(), 10.0 * (p + POWER_FLOOR).log10()))
        })
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Peak power (dB) within ±10% of `freq`.
fn harmonic_db(power: &[f64], bin_hz: f64, freq: f64) -> f64 {
    let lo = ((freq * 0.9) / bin_hz).floor().max(0.0) as usize;
    let hi = (((freq * 1.1) / bin_hz).ceil() as usize).min(power.len() - 1);
    let peak = power
        .get(lo..=hi.max(lo))
        .map(|s| s.iter().fold(0.0f64, |m, p| m.max(*p)))
        .unwrap_or(0.0);
    10.0 * (peak + POWER_FLOOR).log10()
}

fn spectral_flux(prev: &[f64], cur: &[f64]) -> f64 {
    prev.iter().zip(cur).map(|(a, b)| (b - a) * (b - a)).sum()
}

fn link_voiced_pairs(frames: &mut [FrameLld]) {
    for i in 1..frames.len() {
        let (head, tail) = frames.split_at_mut(i);
        let prev = &head[i - 1];
        let cur = &mut tail[0];
        if prev.voiced && cur.voiced {
            cur.voiced_pair = true;
            let (tp, tc) = (1.0 / prev.f0_hz, 1.0 / cur.f0_hz);
            cur.jitter = (tc - tp).abs() / tc;
            if prev.peak_amp > 0.0 && cur.peak_amp > 0.0 {
                cur.shimmer_db = (20.0 * (cur.peak_amp / prev.peak_amp).log10()).abs();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_per_window() {
        assert_eq!(frame_count(16000), 98);
        assert_eq!(frame_count(400), 1);
        assert_eq!(frame_count(10), 1);
    }

    #[test]
    fn levinson_recovers_ar1() {
        // AR(1) x_t = 0.5 x_{t-1} + e: acf = 0.5^k
        let mut acf = [0.0; LPC_ORDER + 1];
        for (k, a) in acf.iter_mut().enumerate() {
            *a = 0.5f64.powi(k as i32);
        }
        let coeffs = levinson_durbin(&acf).unwrap();
        assert!((coeffs[0] + 0.5).abs() < 1e-12);
        assert!(coeffs[1..].iter().all(|c| c.abs() < 1e-12));
        assert!(levinson_durbin(&[0.0; LPC_ORDER + 1]).is_none());
    }

    #[test]
    fn lpc_finds_resonance() {
        // second-order resonator at 700 Hz driven by an impulse train
        let (f, bw) = (700.0, 80.0);
        let r = (-PI * bw / SAMPLE_RATE).exp();
        let theta = 2.0 * PI * f / SAMPLE_RATE;
        let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
        let mut y = vec![0.0; FRAME_LEN];
        for n in 0..FRAME_LEN {
            let e = if n % 100 == 0 { 1.0 } else { 0.0 };
            y[n] = e + a1 * if n > 0 { y[n - 1] } else { 0.0 } + a2 * if n > 1 { y[n - 2] } else { 0.0 };
        }
        let analyzer = FrameAnalyzer::new();
        let formants = analyzer.formants(&y).unwrap();
        assert!(formants.iter().any(|(ff, _)| (ff - f).abs() < 40.0), "{formants:?}");
    }

    #[test]
    fn octave_slope_of_power_law() {
        // P ∝ f^-2 falls 6.02 dB per octave
        let bin_hz = SAMPLE_RATE / SPECTRUM_FFT as f64;
        let power: Vec<f64> = (0..=256)
            .map(|k| if k == 0 { 1.0 } else { 1e6 * (k as f64 * bin_hz).powi(-2) })
            .collect();
        let s = octave_slope(&power, bin_hz, 500.0, 1500.0);
        assert!((s + 20.0 * 2f64.log10()).abs() < 1e-6, "{s}");
    }
}
