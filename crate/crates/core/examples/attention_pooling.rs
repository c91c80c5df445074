//! Forward pass through the GRU with attention pooling. With a zero scoring
//! vector the weights are uniform and the output equals mean pooling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stress_voice::features::FeatureSequence;
use stress_voice::model::{forward, predict, ModelParams, Pooling};

fn main() -> stress_voice::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = ModelParams::init(2, 8, 3, Pooling::Attention, &mut rng);
    let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64 / 5.0, 1.0 - t as f64 / 5.0]).collect();
    let seq = FeatureSequence::from_rows("demo", &rows)?.padded(4);

    let trace = forward(&seq, &params, None)?;
    println!("alpha over {} valid of {} steps: {:.3?}", seq.valid_len, seq.rows, trace.alpha().unwrap());
    println!("prediction: {:.4?}", trace.prediction);

    let mut flat = params.clone();
    flat.attention.as_mut().unwrap().iter_mut().for_each(|w| *w = 0.0);
    let mut mean = flat.clone();
    mean.attention = None;
    println!("zero W attention: {:.6?}", predict(&seq, &flat)?);
    println!("mean pooling:     {:.6?}", predict(&seq, &mean)?);
    Ok(())
}
