//! Recovered null and sampled-max baseline, both scored against the exact null.
//!
//! cargo run --release --example compare_naive

use fastperm::pipeline::{run_compare, RunConfig};
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    let data = generate(&SyntheticConfig {
        planted_rank: 3,
        noise_sd: 0.003,
        ..SyntheticConfig::new(30, 50_000, 0)
    })?;
    for rate in [0.005, 0.01, 0.05] {
        let out = run_compare(&data, &RunConfig::new(2_000, rate))?;
        let m = out.report.compare.as_ref().expect("compare metrics");
        println!("rate {rate}");
        println!("  KL  recovered {:.4}  naive {:.4}", m.kl_recovered, m.kl_naive);
        println!("  BD  recovered {:.4}  naive {:.4}", m.bd_recovered, m.bd_naive);
        for e in &m.threshold_errors {
            if let (Some(f), Some(r), Some(n)) = (e.full, e.recovered, e.naive) {
                println!("  alpha {:<6} full {f:.3}  recovered {r:.3}  naive {n:.3}", e.alpha);
            }
        }
        println!("  {:.1}x fewer evaluations, wall-clock ratio {:.2}", m.count_speedup, m.wall_clock_speedup);
    }
    Ok(())
}
