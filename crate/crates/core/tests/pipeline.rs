use stress_voice::audio::canonicalize;
use stress_voice::features::{extract_sequence, FeatureRegistry};
use stress_voice::synth::{plan_speakers, render_speaker, SynthSpec};

/// Spearman rank correlation (no ties expected in continuous data).
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn f0_features_track_planted_pitch() {
    let spec = SynthSpec {
        duration_s: 6.0,
        ..SynthSpec::default()
    };
    let registry = FeatureRegistry::standard();
    let col = registry.index_of("F0_Hz_amean").unwrap();
    let speakers = plan_speakers(&spec).unwrap();
    let mut pitch = Vec::new();
    let mut f0 = Vec::new();
    for sp in &speakers {
        sp.record.validate().unwrap();
        let audio = canonicalize(&render_speaker(&spec, sp)).unwrap();
        let seq = extract_sequence(&audio, &registry, &sp.record.speaker_id).unwrap();
        pitch.push(sp.latents[0]);
        f0.push(seq.column_mean(col));
    }
    let rho = spearman(&pitch, &f0);
    assert!(rho > 0.9, "spearman {rho}");
}

#[test]
fn spearman_oracle() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
}
