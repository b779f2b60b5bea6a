//! Fast null, thresholds and corrected p-values in one call.
//!
//! cargo run --release --example fast_null [features] [trials] [rate]

use fastperm::pipeline::{run_fast, RunConfig};
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    let mut args = std::env::args().skip(1);
    let features: usize = args.next().map_or(20_000, |s| s.parse().expect("features"));
    let trials: usize = args.next().map_or(1_000, |s| s.parse().expect("trials"));
    let rate: f64 = args.next().map_or(0.01, |s| s.parse().expect("rate"));

    let data = generate(&SyntheticConfig::new(30, features, 1))?;
    let out = run_fast(&data, &RunConfig::new(trials, rate), None)?;
    let r = &out.report;

    let training = r.training.as_ref().expect("fast runs train");
    println!("rank {}, mask {} of {}, b_hat {:.4}", training.rank, training.mask_size, r.features, training.bias_shift);
    for row in &r.thresholds {
        match row.threshold {
            Some(t) => println!("alpha {:<6} threshold {t:.4}", row.alpha),
            None => println!("alpha {:<6} needs more trials", row.alpha),
        }
    }
    println!("max observed t {:.3} at feature {}, p = {:.4}", r.observed.max, r.observed.argmax, r.observed.p_value);
    println!(
        "evaluated {} entries instead of {} ({:.1}x fewer), {:.2}s",
        r.evaluations.permutation_total, r.evaluations.full_equivalent, r.evaluations.count_ratio, r.timings.total_s
    );
    Ok(())
}
