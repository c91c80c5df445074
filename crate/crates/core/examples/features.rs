//! Renders one synthetic speaker and extracts its 88-dimensional window features.

use stress_voice::audio::canonicalize;
use stress_voice::features::{extract_sequence, FeatureRegistry};
use stress_voice::synth::{plan_speakers, render_speaker, SynthSpec};

fn main() -> stress_voice::Result<()> {
    let spec = SynthSpec { n_speakers: 3, duration_s: 5.0, ..SynthSpec::default() };
    let speaker = &plan_speakers(&spec)?[0];
    let audio = canonicalize(&render_speaker(&spec, speaker))?;
    let registry = FeatureRegistry::standard();
    let seq = extract_sequence(&audio, &registry, &speaker.record.speaker_id)?;
    println!("{} windows x {} features (registry {})", seq.rows, seq.dim, registry.version);
    for name in ["F0_Hz_amean", "loudness_dB_amean", "HNR_dB_amean", "voicedFraction", "alphaRatio_amean"] {
        if let Some(i) = registry.index_of(name) {
            println!("{name:<20} window 0: {:>9.3}   mean: {:>9.3}", seq.row(0)[i], seq.column_mean(i));
        }
    }
    Ok(())
}
