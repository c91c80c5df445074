//! Writes a small synthetic WAV corpus plus sessions CSV.
//!
//! cargo run --release --example synth_corpus -- <out_dir>

use std::path::PathBuf;

use stress_voice::synth::{synth_audio_corpus, SynthSpec};

fn main() -> stress_voice::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stress-voice-synth"));
    let spec = SynthSpec { n_speakers: 9, duration_s: 10.0, ..SynthSpec::default() };
    let corpus = synth_audio_corpus(&spec, &out)?;
    println!("wrote {} speakers to {}", corpus.speakers.len(), out.display());
    for s in &corpus.speakers {
        println!(
            "{} {:<5} latents {:+.2?} -> deltas {:+.3?}",
            s.record.speaker_id, s.record.split, s.latents, s.planted
        );
    }
    Ok(())
}
