//! Histogram and median summary of the raw target deltas.

use std::path::PathBuf;

use stress_voice::eval::{histogram_csv, histogram_summary_csv, target_histograms};
use stress_voice::sessions::load_sessions;

fn main() -> stress_voice::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sessions27.csv")));
    let hists = target_histograms(&load_sessions(&path)?, 6)?;
    print!("{}", histogram_summary_csv(&hists));
    println!();
    print!("{}", histogram_csv(&hists));
    Ok(())
}
