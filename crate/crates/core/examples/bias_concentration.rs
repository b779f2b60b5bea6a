//! Per-trial max gaps against the entrywise error, with Chebyshev checks.
//!
//! cargo run --release --example bias_concentration

use fastperm::pipeline::{oracle_recovery, RunConfig};
use fastperm::rmt::chebyshev_bound_check;
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    let data = generate(&SyntheticConfig::new(30, 20_000, 8))?;
    let config = RunConfig {
        master_seed: 3,
        mask_seed: 4,
        ..RunConfig::new(1_100, 0.01)
    };
    let o = oracle_recovery(&data, &config)?;
    let gaps = o.gaps();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (gaps.len() - 1) as f64).sqrt();
    println!("{} recovery trials, epsilon = {:.4}", gaps.len(), o.epsilon);
    println!("b = {:.4} (held out), b_hat = {:.4} (training replay)", o.bias, o.bias_shift);
    println!("gap sd {sd:.4}, largest |gap| {:.4}", gaps.iter().fold(0.0f64, |a, g| a.max(g.abs())));

    let report = chebyshev_bound_check(&gaps, o.bias, o.bias_shift, o.epsilon, &[1.5, 2.0, 3.0, 5.0])?;
    for row in &report.rows {
        println!(
            "k = {}: exceedance {:.4}, bound {:.4}{}",
            row.k,
            row.exceedance,
            row.bound,
            if row.vacuous { " (vacuous)" } else { "" }
        );
    }
    Ok(())
}
