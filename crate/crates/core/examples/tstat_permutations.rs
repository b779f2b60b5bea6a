//! Exact max-statistic permutation test on a small dataset.
//!
//! cargo run --release --example tstat_permutations

use fastperm::nulldist::{build_null, corrected_p_value, threshold, Tail};
use fastperm::permcore::{full_permutation_test, t_statistic, PermutationPlan, StatisticKind};
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    // 20 subjects, 500 features, a real difference on the first 10
    let data = generate(&SyntheticConfig {
        group_effect: 2.5,
        effect_features: 10,
        ..SyntheticConfig::new(20, 500, 7)
    })?;
    let plan = PermutationPlan::new(2_000, 1)?;
    let p = full_permutation_test(&data, &plan, StatisticKind::Pooled, None)?;
    println!("permutation matrix: {} features x {} trials", p.feature_count(), p.trial_count());

    let maxima: Vec<f64> = (0..p.trial_count()).map(|t| p.stats.column(t).max()).collect();
    let null = build_null(maxima, 0.01)?;
    let t05 = threshold(&null, 0.05, Tail::OneSided)?;
    println!("5% FWER threshold on max t: {t05:.3}");

    // group 0 minus group 1, so the planted effect shows up negative; flip labels
    let flipped: Vec<u8> = data.labels().iter().map(|l| 1 - l).collect();
    let observed = t_statistic(&data, &flipped, StatisticKind::Pooled)?.values;
    let hits: Vec<usize> = (0..observed.len()).filter(|&i| observed[i] > t05).collect();
    println!("features above threshold: {hits:?}");
    for &i in hits.iter().take(3) {
        println!("  feature {i}: t = {:.2}, corrected p = {:.4}", observed[i], corrected_p_value(&null, observed[i]));
    }
    Ok(())
}
