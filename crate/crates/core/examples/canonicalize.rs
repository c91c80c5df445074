//! Resamples a 44.1 kHz tone to 16 kHz and peak-normalizes it to -1 dBFS.

use std::f64::consts::PI;

use stress_voice::audio::{canonicalize, AudioBuffer};

fn main() -> stress_voice::Result<()> {
    let rate = 44_100;
    let samples = (0..rate).map(|i| 0.3 * (2.0 * PI * 440.0 * i as f64 / rate as f64).sin()).collect();
    let input = AudioBuffer::new(samples, rate as u32);
    let out = canonicalize(&input)?;
    println!("in:  {} samples at {} Hz, peak {:.4}", input.samples.len(), input.sample_rate, input.peak());
    println!("out: {} samples at {} Hz, peak {:.5}", out.samples.len(), out.sample_rate, out.peak());
    Ok(())
}
