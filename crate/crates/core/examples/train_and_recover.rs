//! Train a basis on full trials and complete one sparse column.
//!
//! cargo run --release --example train_and_recover

use fastperm::permcore::{full_permutation_test, PermutationPlan, StatisticKind};
use fastperm::residual::fit_residual_model;
use fastperm::rng::{self, Domain};
use fastperm::subspace::{make_mask, reconstruct_column, train_basis, TrainingConfig};
use fastperm::synth::{generate, SyntheticConfig};
use fastperm::MaxMode;

fn main() -> fastperm::Result<()> {
    let data = generate(&SyntheticConfig::new(30, 20_000, 3))?;
    let plan = PermutationPlan::new(101, 11)?;
    let p = full_permutation_test(&data, &plan, StatisticKind::Pooled, None)?;
    let p_train = p.stats.columns(0, 100).into_owned();
    let held_out = p.stats.column(100);

    let rank = 30;
    let model = train_basis(&p_train, &TrainingConfig::new(rank, 0.01, 0))?;
    println!(
        "basis {}x{}, passes {}, captured energy {:.4}",
        model.basis.nrows(),
        model.basis.ncols(),
        model.passes,
        model.captured_energy()
    );

    let mask = make_mask(0.01, data.feature_count(), 101, 5, rank)?;
    let residual = fit_residual_model(&p_train, &model, &mask, 0, MaxMode::Upper)?;
    println!("sigma2 = {:.3e}, bias shift = {:.4}", residual.sigma2, residual.bias_shift);

    let idx = mask.indices(100);
    let samples: Vec<f64> = idx.iter().map(|&i| held_out[i]).collect();
    let mut noise = rng::stream(0, Domain::Residual, 100);
    let rec = reconstruct_column(&model, &residual, &idx, &samples, &mut noise)?;
    let err = rec
        .estimate
        .iter()
        .zip(held_out.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("sampled {} of {} entries", idx.len(), data.feature_count());
    println!("true max {:.4}, recovered max {:.4} (+b_hat {:.4})", held_out.max(), rec.max(), rec.max() + residual.bias_shift);
    println!("largest entrywise error {err:.4}");
    Ok(())
}
