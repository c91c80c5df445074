//! WAV decoding and the canonical 16 kHz / mono / −1 dB-peak representation.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

pub const CANONICAL_RATE: u32 = 16_000;
pub const DEFAULT_PEAK_DB: f64 = -1.0;

/// Taps per polyphase branch of the resampling filter.
const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.0;
/// Fraction of the lower Nyquist frequency kept by the anti-aliasing filter.
const RESAMPLE_ROLLOFF: f64 = 0.94;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Reads a PCM (8/16/24/32-bit integer) or 32-bit float WAV file.
///
/// Integer samples are scaled by `2^(bits-1)`; channels are averaged to mono.
/// The file's sample rate is kept.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    decode(reader).map_err(|e| wav_error(path, e))
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    // an in-memory short read means a truncated file, not an I/O failure
    let malformed = |e: hound::Error| Error::Format(format!("<memory>: {e}"));
    let reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(malformed)?;
    decode(reader).map_err(malformed)
}

fn decode<R: std::io::Read>(reader: hound::WavReader<R>) -> hound::Result<AudioBuffer> {
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(hound::Error::Unsupported);
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<hound::Result<_>>()?
        }
        hound::SampleFormat::Int => {
            if !matches!(spec.bits_per_sample, 8 | 16 | 24 | 32) {
                return Err(hound::Error::Unsupported);
            }
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<hound::Result<_>>()?
        }
    };
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

fn wav_error(path: impl AsRef<Path>, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io)
            if !matches!(io.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            Error::io(path.as_ref(), io)
        }
        other => Error::Format(format!("{}: {other}", path.as_ref().display())),
    }
}

/// Writes mono 16-bit PCM, clipping to the representable range.
pub fn write_wav(path: &Path, buf: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &buf.samples {
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Writes mono 32-bit float samples without clipping.
pub fn write_wav_f32(path: &Path, buf: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &buf.samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn quantize_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Polyphase windowed-sinc rate converter for a fixed rational ratio.
struct Polyphase {
    up: u64,
    down: u64,
    /// `up` branches of `RESAMPLE_TAPS` coefficients each, unity DC gain.
    branches: Vec<[f64; RESAMPLE_TAPS]>,
}

impl Polyphase {
    fn new(from: u32, to: u32) -> Self {
        let g = gcd(u64::from(from), u64::from(to));
        let up = u64::from(to) / g;
        let down = u64::from(from) / g;
        let cutoff = (up as f64 / down as f64).min(1.0) * RESAMPLE_ROLLOFF;
        let half = (RESAMPLE_TAPS / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let branches = (0..up)
            .map(|phase| {
                let frac = phase as f64 / up as f64;
                let mut taps = [0.0; RESAMPLE_TAPS];
                for (k, tap) in taps.iter_mut().enumerate() {
                    // tap k multiplies x[i + k - (TAPS/2 - 1)]
                    let tau = k as f64 - (half - 1.0) - frac;
                    let r = tau / half;
                    let window = if r.abs() <= 1.0 {
                        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
                    } else {
                        0.0
                    };
                    *tap = cutoff * sinc(cutoff * tau) * window;
                }
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        Polyphase {
            up,
            down,
            branches,
        }
    }

    fn process(&self, input: &[f64]) -> Vec<f64> {
        let n_out = (input.len() as u64 * self.up).div_ceil(self.down) as usize;
        let offset = RESAMPLE_TAPS as i64 / 2 - 1;
        let len = input.len() as i64;
        (0..n_out as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.branches[(pos % self.up) as usize];
                let start = base - offset;
                if start >= 0 && start + RESAMPLE_TAPS as i64 <= len {
                    let window = &input[start as usize..start as usize + RESAMPLE_TAPS];
                    window.iter().zip(taps).map(|(x, h)| x * h).sum()
                } else {
                    taps.iter()
                        .enumerate()
                        .filter_map(|(k, h)| {
                            let idx = start + k as i64;
                            (0..len).contains(&idx).then(|| input[idx as usize] * h)
                        })
                        .sum()
                }
            })
            .collect()
    }
}

/// Band-limited sample-rate conversion. Identity when the rate already matches.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 || buf.sample_rate == 0 {
        return Err(Error::Invalid("sample rates must be positive".into()));
    }
    if buf.sample_rate == target_rate {
        return Ok(buf.clone());
    }
    let filter = Polyphase::new(buf.sample_rate, target_rate);
    Ok(AudioBuffer::new(filter.process(&buf.samples), target_rate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakNormalized {
    pub buffer: AudioBuffer,
    /// Set when the input was digital silence and was returned unchanged.
    pub silent: bool,
}

/// Scales the buffer so that its absolute peak equals `target_db` dBFS.
pub fn peak_normalize(buf: &AudioBuffer, target_db: f64) -> PeakNormalized {
    let peak = buf.peak();
    if peak == 0.0 || !peak.is_finite() {
        log::warn!("peak normalization skipped: signal is silent");
        return PeakNormalized {
            buffer: buf.clone(),
            silent: true,
        };
    }
    let gain = 10f64.powf(target_db / 20.0) / peak;
    PeakNormalized {
        buffer: AudioBuffer::new(
            buf.samples.iter().map(|x| x * gain).collect(),
            buf.sample_rate,
        ),
        silent: false,
    }
}

/// Resamples to 16 kHz and normalizes the peak to −1 dBFS.
pub fn canonicalize(buf: &AudioBuffer) -> Result<AudioBuffer> {
    let resampled = resample(buf, CANONICAL_RATE)?;
    Ok(peak_normalize(&resampled, DEFAULT_PEAK_DB).buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};
    use tempfile::tempdir;

    fn sine(freq: f64, rate: u32, seconds: f64, amp: f64) -> AudioBuffer {
        let n = (seconds * f64::from(rate)).round() as usize;
        AudioBuffer::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin())
                .collect(),
            rate,
        )
    }

    // Independent oracle: dominant bin of a plain FFT magnitude spectrum.
    fn dominant_frequency(buf: &AudioBuffer) -> f64 {
        let n = buf.samples.len();
        let mut data: Vec<Complex<f64>> = buf.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut data);
        let (bin, _) = data[1..n / 2]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        (bin + 1) as f64 * f64::from(buf.sample_rate) / n as f64
    }

    fn wav_bytes(spec: hound::WavSpec, samples: &[i32]) -> Vec<u8> {
        let mut cursor = std::io::Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            for &s in samples {
                w.write_sample(s).unwrap();
            }
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    #[test]
    fn reads_16_bit_scaling() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let buf = read_wav_bytes(&wav_bytes(spec, &[0, 16384, -32768])).unwrap();
        let expect = [0.0, 0.5, -1.0];
        for (a, b) in buf.samples.iter().zip(expect) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(buf.sample_rate, 16000);
    }

    #[test]
    fn reads_24_bit_and_stereo_mean() {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let full = 1 << 23;
        let l = (0.2 * full as f64) as i32;
        let r = (0.6 * full as f64) as i32;
        let buf = read_wav_bytes(&wav_bytes(spec, &[l, r, l, r])).unwrap();
        assert_eq!(buf.samples.len(), 2);
        assert!((buf.samples[0] - 0.4).abs() < 1e-6);
        assert_eq!(buf.sample_rate, 44100);
    }

    #[test]
    fn truncated_header_is_format_error() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let bytes = wav_bytes(spec, &[1, 2, 3]);
        assert!(matches!(read_wav_bytes(&bytes[..20]), Err(Error::Format(_))));
        assert!(matches!(read_wav_bytes(b"OggS not a wave file"), Err(Error::Format(_))));
    }

    #[test]
    fn writer_round_trip_within_one_lsb() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let buf = sine(300.0, 16000, 0.1, 0.9);
        write_wav(&path, &buf).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples.len(), buf.samples.len());
        for (a, b) in back.samples.iter().zip(&buf.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }

        let loud = AudioBuffer::new(vec![0.0, 2.0, -1.5], 8000);
        write_wav_f32(&path, &loud).unwrap();
        assert_eq!(read_wav(&path).unwrap().samples, loud.samples);
    }

    #[test]
    fn resample_identity_and_length() {
        let buf = sine(440.0, 16000, 0.5, 0.5);
        assert_eq!(resample(&buf, 16000).unwrap(), buf);
        let one_second = sine(440.0, 48000, 1.0, 0.5);
        let out = resample(&one_second, 16000).unwrap();
        assert!((out.samples.len() as i64 - 16000).abs() <= 1);
        let out = resample(&sine(440.0, 44100, 1.0, 0.5), 16000).unwrap();
        assert!((out.samples.len() as i64 - 16000).abs() <= 1);
    }

    #[test]
    fn resampled_tone_keeps_frequency() {
        let out = resample(&sine(440.0, 48000, 1.0, 0.5), 16000).unwrap();
        let f = dominant_frequency(&out);
        assert!((f - 440.0).abs() <= 2.0, "{f}");
        // steady-state amplitude preserved away from the edges
        let mid_peak = out.samples[4000..12000].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((mid_peak - 0.5).abs() < 0.01, "{mid_peak}");
    }

    #[test]
    fn resample_round_trip_preserves_tone() {
        let orig = sine(1000.0, 44100, 1.0, 0.5);
        let down = resample(&orig, 16000).unwrap();
        let back = resample(&down, 44100).unwrap();
        let f = dominant_frequency(&back);
        assert!((f - 1000.0).abs() / 1000.0 < 0.005, "{f}");
    }

    #[test]
    fn aliasing_is_suppressed() {
        // 7.9 kHz is above the 0.94 * 8 kHz passband edge; 12 kHz would fold to 4 kHz.
        let out = resample(&sine(12000.0, 48000, 1.0, 0.5), 16000).unwrap();
        let rms = (out.samples[1000..15000].iter().map(|x| x * x).sum::<f64>() / 14000.0).sqrt();
        assert!(rms < 1e-3, "{rms}");
    }

    #[test]
    fn peak_normalization() {
        let target = 10f64.powf(-1.0 / 20.0);
        let half = AudioBuffer::new(vec![0.1, -0.5, 0.25], 16000);
        let out = peak_normalize(&half, -1.0);
        assert!(!out.silent);
        assert!((out.buffer.peak() - target).abs() < 1e-12);
        assert!((out.buffer.peak() - 0.89125).abs() < 1e-4);

        let hot = AudioBuffer::new(vec![2.0, -1.0], 16000);
        assert!((peak_normalize(&hot, -1.0).buffer.peak() - target).abs() < 1e-12);

        let silence = AudioBuffer::new(vec![0.0; 100], 16000);
        let out = peak_normalize(&silence, -1.0);
        assert!(out.silent);
        assert_eq!(out.buffer, silence);
    }

    #[test]
    fn peak_normalization_is_idempotent() {
        let buf = sine(220.0, 16000, 0.2, 0.3);
        let once = peak_normalize(&buf, -1.0).buffer;
        let twice = peak_normalize(&once, -1.0).buffer;
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn canonical_form() {
        let out = canonicalize(&sine(200.0, 22050, 0.5, 0.2)).unwrap();
        assert_eq!(out.sample_rate, CANONICAL_RATE);
        assert!((out.peak() - 10f64.powf(-0.05)).abs() < 1e-9);
    }
}
