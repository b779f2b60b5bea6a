//! Train once, save the bundle, and reuse it for a new batch of trials.
//!
//! cargo run --release --example model_artifact

use fastperm::io;
use fastperm::pipeline::{run_fast, RunConfig};
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    let data = generate(&SyntheticConfig::new(30, 20_000, 4))?;
    let dir = std::env::temp_dir().join("fastperm-model-artifact");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bundle.json");

    let first = run_fast(&data, &RunConfig::new(500, 0.01), None)?;
    io::save_bundle(&path, &first.bundle)?;
    println!("saved bundle ({} bytes) to {}", std::fs::metadata(&path)?.len(), path.display());

    let bundle = io::load_bundle(&path)?;
    let config = RunConfig {
        master_seed: 1,
        mask_seed: 2,
        ..RunConfig::new(2_000, 0.01)
    };
    let second = run_fast(&data, &config, Some(&bundle))?;
    let e = &second.report.evaluations;
    println!("second batch: {} trials, no full columns, {} sampled entries", second.report.trial_count, e.sampled);
    println!(
        "5% threshold: first {:?}, second {:?}",
        first.report.threshold(0.05),
        second.report.threshold(0.05)
    );
    Ok(())
}
