//! Trains an attention GRU with a multi-task head on a synthetic feature corpus
//! and prints the per-epoch history.
//!
//! cargo run --release --example train_synthetic -- [epochs] [learning_rate]

use std::time::Instant;

use stress_voice::dataset::Dataset;
use stress_voice::model::{Pooling, TaskMode};
use stress_voice::synth::{synth_feature_corpus, FeatureSynthSpec};
use stress_voice::train::{history_csv, train, TrainConfig};

fn main() -> stress_voice::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(100);
    let lr = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.001);

    let corpus = synth_feature_corpus(&FeatureSynthSpec::default())?;
    let dataset = Dataset::new(corpus.examples);
    let config = TrainConfig {
        max_epochs: epochs,
        patience: 10.min(epochs),
        learning_rate: lr,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train(&dataset, Pooling::Attention, TaskMode::Mtl, &config, 7)?;
    print!("{}", history_csv(&outcome.history));
    println!(
        "best epoch {} dev MAE {:.4} in {:.1?}",
        outcome.best_epoch,
        outcome.best_dev_mae,
        start.elapsed()
    );
    Ok(())
}
