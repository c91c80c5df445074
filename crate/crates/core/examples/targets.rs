//! Loads a sessions CSV, derives the three stress deltas and scales them with
//! train-split min/max.
//!
//! cargo run --example targets -- [sessions.csv]

use std::path::PathBuf;

use stress_voice::sessions::{build_targets, load_sessions, Target};

fn main() -> stress_voice::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sessions27.csv")));
    let records = load_sessions(&path)?;
    let (scaling, targets) = build_targets(&records)?;
    for t in Target::ALL {
        let [lo, hi] = scaling.range(t);
        println!("{t:<10} train range [{lo:.3}, {hi:.3}]");
    }
    println!("\nspeaker split  cortisol appraisal affect  (scaled)");
    for (r, t) in records.iter().zip(&targets) {
        println!(
            "{:<7} {:<5} {:>8.3} {:>9.3} {:>6.3}  ({:.2} {:.2} {:.2})",
            r.speaker_id, r.split, t.cortisol_delta, t.appraisal_delta, t.affect_delta, t.scaled[0], t.scaled[1], t.scaled[2]
        );
    }
    Ok(())
}
