//! Standard (train-fitted) versus per-speaker z-scoring. Standard statistics
//! come from the train speaker only, so the test speaker lands far outside.

use stress_voice::features::FeatureSequence;
use stress_voice::norm::{NormMode, NormStats};
use stress_voice::sessions::Split;

fn main() -> stress_voice::Result<()> {
    let a = FeatureSequence::from_rows("a", &[vec![100.0, 1.0], vec![120.0, 2.0]])?;
    let b = FeatureSequence::from_rows("b", &[vec![200.0, 3.0], vec![260.0, 5.0]])?;
    let data = [(&a, Split::Train), (&b, Split::Test)];
    for mode in NormMode::ALL {
        let stats = NormStats::fit(data, mode)?;
        println!("{mode}:");
        for seq in [&a, &b] {
            let out = stats.transform(seq)?;
            println!("  {} -> {:?}", seq.speaker_id, out.data);
        }
    }
    Ok(())
}
