//! Trains an attention GRU on a corpus whose signal lives only in the first
//! half of each sequence, then reports where the attention mass lands.
//!
//! cargo run --release --example attention_report -- [out_dir]

use stress_voice::dataset::Dataset;
use stress_voice::eval::{attention_report, DEFAULT_SMOOTHING};
use stress_voice::model::{Pooling, TaskMode};
use stress_voice::sessions::Split;
use stress_voice::synth::{synth_feature_corpus, FeatureSynthSpec};
use stress_voice::train::{train, TrainConfig};

fn main() -> stress_voice::Result<()> {
    let spec = FeatureSynthSpec {
        first_half_only: true,
        ..FeatureSynthSpec::default()
    };
    let dataset = Dataset::new(synth_feature_corpus(&spec)?.examples);
    let outcome = train(&dataset, Pooling::Attention, TaskMode::Mtl, &TrainConfig::default(), 3)?;
    println!("best epoch {} dev MAE {:.4}", outcome.best_epoch, outcome.best_dev_mae);

    let test: Vec<_> = dataset
        .indices(Split::Test)
        .into_iter()
        .map(|i| &dataset.get(i).seq)
        .collect();
    let report = attention_report(&outcome.params, &test, DEFAULT_SMOOTHING)?;
    println!("attention mass on the first half: {:.3}", report.first_half_mass());

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir).map_err(|e| stress_voice::Error::io(dir, e))?;
        for (name, text) in [
            ("attention_alpha.csv", report.alpha_csv()),
            ("attention_curve.csv", report.curve_csv()),
            ("attention.svg", report.svg()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| stress_voice::Error::io(&path, e))?;
        }
        println!("wrote report to {}", dir.display());
    }
    Ok(())
}
