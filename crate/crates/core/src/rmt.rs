//! Spectral checks for the low-rank-plus-noise model `P = U W + S`.
//!
//! Closed-form predictions (Marchenko–Pastur edges, spiked eigenvalues,
//! the perturbation condition) live next to simulators that eigensolve the
//! exact `P Pᵀ`, cross terms included, so every prediction can be checked
//! against a draw.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Dimensions and spectrum of a planted spiked model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScenario {
    pub v: usize,
    pub t: usize,
    /// Non-zero eigenvalues of `U W Wᵀ Uᵀ`, descending.
    pub lambdas: Vec<f64>,
    pub sigma2: f64,
    pub delta: f64,
}

impl SpectralScenario {
    pub fn new(v: usize, t: usize, lambdas: Vec<f64>, sigma2: f64, delta: f64) -> Result<Self> {
        if v == 0 || t == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        if lambdas.is_empty() || lambdas.len() > v.min(t) {
            return Err(Error::InvalidParameter(format!(
                "planted rank {} must be in 1..={}",
                lambdas.len(),
                v.min(t)
            )));
        }
        if lambdas.iter().any(|&l| l.is_nan() || l <= 0.0) || lambdas.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "planted eigenvalues must be positive and descending".into(),
            ));
        }
        if sigma2.is_nan() || sigma2 < 0.0 {
            return Err(Error::InvalidParameter("sigma2 must be non-negative".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter("delta must lie in (0, 1)".into()));
        }
        Ok(Self {
            v,
            t,
            lambdas,
            sigma2,
            delta,
        })
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn gamma(&self) -> f64 {
        self.v as f64 / self.t as f64
    }

    fn lambda_r(&self) -> f64 {
        *self.lambdas.last().expect("non-empty")
    }

    /// Largest residual variance for which the spikes stay separated: `δλ_r / t`.
    pub fn sigma2_bound(&self) -> f64 {
        self.delta * self.lambda_r() / self.t as f64
    }

    /// `σ² < δλ_r / t`.
    pub fn premise_holds(&self) -> bool {
        self.sigma2 < self.sigma2_bound()
    }
}

/// Edges `σ²t(1 ∓ √(v/t))²` of the Marchenko–Pastur bulk of `S Sᵀ`.
pub fn mp_support(sigma2: f64, v: usize, t: usize) -> (f64, f64) {
    let scale = sigma2 * t as f64;
    let root = (v as f64 / t as f64).sqrt();
    (scale * (1.0 - root).powi(2), scale * (1.0 + root).powi(2))
}

/// Predicted eigenvalues of `Q + S Sᵀ`, descending: spikes
/// `λ + σ²t + γσ⁴t²/λ` for `λ > γσ²t` (else `γσ²t`), then the bulk value
/// `σ²t(1 − 2√γ)` for the remaining `v − r`.
pub fn predicted_spike_eigenvalues(scenario: &SpectralScenario) -> Vec<f64> {
    let gamma = scenario.gamma();
    let st = scenario.sigma2 * scenario.t as f64;
    let mut out: Vec<f64> = scenario
        .lambdas
        .iter()
        .map(|&l| {
            if l > gamma * st {
                l + st + gamma * st * st / l
            } else {
                gamma * st
            }
        })
        .collect();
    let bulk = st * (1.0 - 2.0 * gamma.sqrt());
    out.resize(scenario.v, bulk);
    out
}

/// Substitutes the predictions into the perturbation condition.
pub fn predicted_condition_holds(scenario: &SpectralScenario) -> bool {
    let predicted = predicted_spike_eigenvalues(scenario);
    check_star_condition(scenario, &predicted).holds
}

/// Outcome of checking the perturbation condition on a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarReport {
    /// `|λ̃_i − λ_i| < δλ_i` for each planted index.
    pub spikes: Vec<bool>,
    /// `λ̃_i < δλ_r` for every index past the rank.
    pub bulk: bool,
    /// `σ² < δλ_r / t`.
    pub premise: bool,
    pub holds: bool,
    /// Slack `δλ_i − |λ̃_i − λ_i|` per planted index.
    pub spike_slack: Vec<f64>,
}

pub fn check_star_condition(scenario: &SpectralScenario, eigs: &[f64]) -> StarReport {
    let r = scenario.rank();
    let delta = scenario.delta;
    let mut spikes = Vec::with_capacity(r);
    let mut spike_slack = Vec::with_capacity(r);
    for (i, &lambda) in scenario.lambdas.iter().enumerate() {
        let observed = eigs.get(i).copied().unwrap_or(0.0);
        let slack = delta * lambda - (observed - lambda).abs();
        spikes.push(slack > 0.0);
        spike_slack.push(slack);
    }
    let cap = delta * scenario.lambda_r();
    let bulk = eigs.iter().skip(r).all(|&e| e < cap);
    StarReport {
        holds: bulk && spikes.iter().all(|&ok| ok),
        spikes,
        bulk,
        premise: scenario.premise_holds(),
        spike_slack,
    }
}

fn gaussian(rows: usize, cols: usize, sd: f64, g: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * g.sample::<f64, _>(StandardNormal))
}

fn descending_eigenvalues(gram: DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    eigs
}

/// Eigenvalues (descending) of `S Sᵀ` for a `v × t` matrix of `N(0, σ²)`.
pub fn simulate_noise_spectrum(sigma2: f64, v: usize, t: usize, seed: u64, draw: u64) -> Vec<f64> {
    let mut g = rng::stream(seed, Domain::Spectral, draw);
    // t × v so that the Gram product runs through the blocked kernel
    let st = gaussian(t, v, sigma2.sqrt(), &mut g);
    descending_eigenvalues(st.transpose() * &st)
}

/// Eigenvalues (descending) of `P Pᵀ` for one draw of `P = U W + S`, where
/// `U` and the rows of `W` are random orthonormal frames and
/// `W Wᵀ = diag(λ)`.
pub fn simulate_spectrum(scenario: &SpectralScenario, seed: u64, draw: u64) -> Vec<f64> {
    let (v, t, r) = (scenario.v, scenario.t, scenario.rank());
    let mut g = rng::stream(seed, Domain::Spectral, draw);
    let u = gaussian(v, r, 1.0, &mut g).qr().q();
    let mut rows = gaussian(t, r, 1.0, &mut g).qr().q();
    for (k, &l) in scenario.lambdas.iter().enumerate() {
        rows.column_mut(k).scale_mut(l.sqrt());
    }
    // Pᵀ = Wᵀ Uᵀ + Sᵀ
    let mut pt = rows * u.transpose();
    pt += gaussian(t, v, scenario.sigma2.sqrt(), &mut g);
    descending_eigenvalues(pt.transpose() * &pt)
}

/// Aggregate of repeated draws of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub sigma2: f64,
    pub sigma2_bound: f64,
    pub premise: bool,
    pub draws: usize,
    pub star_holds: usize,
    /// Largest `|simulated − predicted| / predicted` over spikes and draws.
    pub max_spike_rel_error: f64,
    pub mean_spike_rel_error: f64,
    pub mean_top_bulk: f64,
    pub mp_upper: f64,
    pub predicted_condition: bool,
}

/// Simulates `draws` independent spectra of `scenario` and tallies the
/// perturbation condition and spike-prediction errors.
pub fn validate_scenario(scenario: &SpectralScenario, draws: usize, seed: u64) -> ScenarioSummary {
    let predicted = predicted_spike_eigenvalues(scenario);
    let r = scenario.rank();
    let results: Vec<(bool, Vec<f64>, f64)> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let eigs = simulate_spectrum(scenario, seed, d);
            let report = check_star_condition(scenario, &eigs);
            let errs = (0..r)
                .map(|i| (eigs[i] - predicted[i]).abs() / predicted[i])
                .collect();
            (report.holds, errs, eigs[r])
        })
        .collect();
    let star_holds = results.iter().filter(|(h, _, _)| *h).count();
    let all_errs: Vec<f64> = results.iter().flat_map(|(_, e, _)| e.iter().copied()).collect();
    ScenarioSummary {
        sigma2: scenario.sigma2,
        sigma2_bound: scenario.sigma2_bound(),
        premise: scenario.premise_holds(),
        draws,
        star_holds,
        max_spike_rel_error: all_errs.iter().copied().fold(0.0, f64::max),
        mean_spike_rel_error: all_errs.iter().sum::<f64>() / all_errs.len().max(1) as f64,
        mean_top_bulk: results.iter().map(|(_, _, b)| b).sum::<f64>() / draws.max(1) as f64,
        mp_upper: mp_support(scenario.sigma2, scenario.v, scenario.t).1,
        predicted_condition: predicted_condition_holds(scenario),
    }
}

/// One row of a Chebyshev-bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChebyshevRow {
    pub k: f64,
    pub exceedance: f64,
    pub bound: f64,
    pub slack: f64,
    /// `1/k² ≥ 1`: the bound says nothing.
    pub vacuous: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChebyshevReport {
    pub trials: usize,
    pub epsilon: f64,
    pub rows: Vec<ChebyshevRow>,
}

impl ChebyshevReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Empirical frequency of `gap − (b − b̂) > kε` for each `k`, passing when it
/// is at most `1/k² + 3/√T`.
pub fn chebyshev_bound_check(
    gaps: &[f64],
    b: f64,
    b_hat: f64,
    epsilon: f64,
    ks: &[f64],
) -> Result<ChebyshevReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    if gaps.is_empty() || gaps.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidParameter("gaps must be finite and non-empty".into()));
    }
    let t = gaps.len();
    let slack = 3.0 / (t as f64).sqrt();
    let rows = ks
        .iter()
        .map(|&k| {
            let over = gaps
                .iter()
                .filter(|&&g| g - (b - b_hat) > k * epsilon)
                .count();
            let exceedance = over as f64 / t as f64;
            let bound = 1.0 / (k * k);
            let vacuous = bound >= 1.0;
            ChebyshevRow {
                k,
                exceedance,
                bound,
                slack,
                vacuous,
                pass: vacuous || exceedance <= bound + slack,
            }
        })
        .collect();
    Ok(ChebyshevReport {
        trials: t,
        epsilon,
        rows,
    })
}

/// Declarative sweep over residual variances for one planted spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub v: usize,
    pub t: usize,
    pub lambdas: Vec<f64>,
    pub delta: f64,
    /// Absolute residual variances to test.
    #[serde(default)]
    pub sigma2: Vec<f64>,
    /// Residual variances as multiples of `δλ_r / t`.
    #[serde(default)]
    pub sigma2_fractions: Vec<f64>,
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn scenarios(&self) -> Result<Vec<SpectralScenario>> {
        let base = SpectralScenario::new(self.v, self.t, self.lambdas.clone(), 0.0, self.delta)?;
        let bound = base.sigma2_bound();
        let grid: Vec<f64> = self
            .sigma2
            .iter()
            .copied()
            .chain(self.sigma2_fractions.iter().map(|f| f * bound))
            .collect();
        if grid.is_empty() {
            return Err(Error::InvalidParameter("sweep has no sigma2 values".into()));
        }
        grid.into_iter()
            .map(|s| SpectralScenario::new(self.v, self.t, self.lambdas.clone(), s, self.delta))
            .collect()
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ScenarioSummary>> {
    Ok(config
        .scenarios()?
        .iter()
        .map(|s| validate_scenario(s, config.draws, config.seed))
        .collect())
}
