//! Runs the eight-row model/task/normalization grid on a small synthetic
//! feature corpus and prints the results table. Test cells are filled only
//! for the dev-best row of each target.

use stress_voice::dataset::Dataset;
use stress_voice::eval::{run_grid, GridConfig};
use stress_voice::synth::{synth_feature_corpus, FeatureSynthSpec};
use stress_voice::train::TrainConfig;

fn main() -> stress_voice::Result<()> {
    let spec = FeatureSynthSpec { n_train: 40, n_dev: 10, n_test: 10, seq_len: 30, ..FeatureSynthSpec::default() };
    let dataset = Dataset::new(synth_feature_corpus(&spec)?.examples);
    let config = GridConfig {
        train: TrainConfig { max_epochs: 30, hidden: 16, ..TrainConfig::default() },
        seed: 1,
    };
    let outcome = run_grid(&dataset, &config, 1)?;
    print!("{}", outcome.table.to_csv());
    println!("test reads before selection: {}", outcome.test_reads_before_selection);
    Ok(())
}
