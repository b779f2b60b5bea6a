//! Noise-only and spiked spectra against their predictions.
//!
//! cargo run --release --example marchenko_pastur

use fastperm::rmt::{
    check_star_condition, mp_support, predicted_spike_eigenvalues, simulate_noise_spectrum, simulate_spectrum,
    validate_scenario, SpectralScenario,
};

fn main() -> fastperm::Result<()> {
    let (v, t) = (200, 20_000);
    let eigs = simulate_noise_spectrum(1.0, v, t, 42, 0);
    let (lo, hi) = mp_support(1.0, v, t);
    println!("noise only: eigenvalues in [{:.0}, {:.0}], predicted [{lo:.0}, {hi:.0}]", eigs[v - 1], eigs[0]);

    let lambdas = vec![1000.0, 800.0, 600.0, 400.0, 200.0];
    let base = SpectralScenario::new(v, t, lambdas.clone(), 0.0, 0.5)?;
    let bound = base.sigma2_bound();
    println!("sigma2 bound {bound:.4}");
    for fraction in [0.25, 0.5, 1.0, 2.0] {
        let s = SpectralScenario::new(v, t, lambdas.clone(), fraction * bound, 0.5)?;
        let predicted = predicted_spike_eigenvalues(&s);
        let one = simulate_spectrum(&s, 7, 0);
        let star = check_star_condition(&s, &one);
        let summary = validate_scenario(&s, 20, 7);
        println!(
            "sigma2 = {:.4}: top spike {:.1} (predicted {:.1}), condition {} in {}/{} draws, max rel error {:.3}",
            s.sigma2, one[0], predicted[0], if star.holds { "holds" } else { "fails" }, summary.star_holds, summary.draws,
            summary.max_spike_rel_error
        );
    }
    Ok(())
}
