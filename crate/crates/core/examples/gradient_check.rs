//! Compares backpropagation-through-time gradients with central finite
//! differences for every parameter block of all four model variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stress_voice::features::FeatureSequence;
use stress_voice::model::{ModelParams, Pooling, TaskMode};
use stress_voice::sessions::Target;
use stress_voice::train::{gradient_check, BatchItem};

fn main() -> stress_voice::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seq = || {
        let data = (0..9 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureSequence::new("x", 9, 6, data)
    };
    let seqs = [seq()?, seq()?];
    let targets = [[2.0, -2.0, 3.0], [-3.0, 2.0, -2.0]];
    for pooling in [Pooling::Mean, Pooling::Attention] {
        for task in [TaskMode::Stl(Target::Appraisal), TaskMode::Mtl] {
            let k = task.outputs();
            let params = ModelParams::init(6, 4, k, pooling, &mut ChaCha8Rng::seed_from_u64(k as u64));
            let batch: Vec<BatchItem<'_>> = seqs
                .iter()
                .zip(&targets)
                .map(|(s, t)| BatchItem { seq: s, target: &t[..k], mask: None })
                .collect();
            println!("{}-{task}", pooling.model_name());
            for (block, err) in gradient_check(&params, &batch, 1e-5)? {
                println!("  {block:<10} max rel err {err:.2e}");
            }
        }
    }
    Ok(())
}
