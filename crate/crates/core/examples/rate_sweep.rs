//! Sweep the twenty standard sampling rates and write a CSV table.
//!
//! cargo run --release --example rate_sweep [out.csv]

use std::path::PathBuf;

use fastperm::io;
use fastperm::pipeline::{rate_sweep, standard_rates, RunConfig};
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    // 16 subjects keep the rank small enough that even 0.1% of 50,000 is feasible
    let data = generate(&SyntheticConfig {
        planted_rank: 3,
        noise_sd: 0.003,
        ..SyntheticConfig::new(16, 50_000, 2)
    })?;
    let sweep = rate_sweep(&data, &RunConfig::new(2_000, 0.01), &standard_rates())?;
    println!("{:>8} {:>6} {:>10} {:>10} {:>8}", "rate", "mask", "KL rec", "KL naive", "speedup");
    for row in &sweep.rows {
        println!(
            "{:>8.4} {:>6} {:>10.4} {:>10.4} {:>8.1}",
            row.rate, row.mask_size, row.kl_recovered, row.kl_naive, row.count_speedup
        );
    }
    if !sweep.skipped.is_empty() {
        println!("skipped (too few samples for the rank): {:?}", sweep.skipped);
    }
    if let Some(path) = out {
        io::write_sweep_csv(&path, &sweep)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
