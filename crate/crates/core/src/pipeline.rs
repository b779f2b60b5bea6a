//! Run orchestration: exact (`full`) and train-then-recover (`fast`)
//! permutation nulls, side-by-side comparison, rate sweeps and an oracle
//! diagnostic that measures the recovery error directly.
//!
//! Permutation matrices are never materialised beyond the training block:
//! every trial is reduced to its maximum as soon as it is computed.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nulldist::{
    self, build_null, corrected_p_value, MaxMode, MaxNullDistribution, Tail, DEFAULT_BIN_WIDTH,
    STANDARD_ALPHAS,
};
use crate::parallel;
use crate::permcore::{permute_labels, LabeledDataset, PermutationPlan, StatisticKind, TStatEngine};
use crate::residual::{fit_residual_model, ResidualModel};
use crate::rng::{self, Domain};
use crate::subspace::{
    make_mask, reconstruct_column, train_basis, BasisInit, SamplingMask, SubspaceModel,
    TrainingConfig, DEFAULT_PASSES, DEFAULT_TRAINING_TRIALS,
};

/// Version of the report and bundle layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    #[default]
    Fast,
    Compare,
    Rmt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub label_path: Option<PathBuf>,
    pub trial_count: usize,
    pub training_trials: usize,
    /// Defaults to the number of subjects.
    pub rank: Option<usize>,
    pub sampling_rate: f64,
    /// Rate used inside the training passes; defaults to `sampling_rate`.
    pub training_rate: Option<f64>,
    pub passes: usize,
    pub basis_init: BasisInit,
    pub bin_width: f64,
    pub alpha_levels: Vec<f64>,
    pub master_seed: u64,
    pub mask_seed: u64,
    pub mode: Mode,
    pub tail: Tail,
    pub max_mode: MaxMode,
    pub statistic: StatisticKind,
    /// Worker threads; `None` uses the ambient pool. Never affects results.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            label_path: None,
            trial_count: 1000,
            training_trials: DEFAULT_TRAINING_TRIALS,
            rank: None,
            sampling_rate: 0.005,
            training_rate: None,
            passes: DEFAULT_PASSES,
            basis_init: BasisInit::default(),
            bin_width: DEFAULT_BIN_WIDTH,
            alpha_levels: STANDARD_ALPHAS.to_vec(),
            master_seed: 0,
            mask_seed: 1,
            mode: Mode::default(),
            tail: Tail::default(),
            max_mode: MaxMode::default(),
            statistic: StatisticKind::default(),
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn new(trial_count: usize, sampling_rate: f64) -> Self {
        Self {
            trial_count,
            sampling_rate,
            ..Self::default()
        }
    }

    pub fn resolved_rank(&self, subjects: usize) -> usize {
        self.rank.unwrap_or(subjects)
    }

    pub fn resolved_training_rate(&self) -> f64 {
        self.training_rate.unwrap_or(self.sampling_rate)
    }

    fn validate_common(&self) -> Result<()> {
        if self.trial_count == 0 {
            return Err(Error::InvalidParameter("trial_count must be positive".into()));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::InvalidParameter("bin_width must be positive".into()));
        }
        if self.alpha_levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidParameter("alpha levels must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Checks `0 < rate ≤ 1` and `T ≥ T₀ ≥ r` for a dataset with `subjects`
    /// rows.
    pub fn validate_fast(&self, subjects: usize) -> Result<()> {
        self.validate_common()?;
        for rate in [self.sampling_rate, self.resolved_training_rate()] {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::InvalidParameter(format!("sampling rate {rate} outside (0, 1]")));
            }
        }
        let rank = self.resolved_rank(subjects);
        if rank == 0 {
            return Err(Error::InvalidParameter("rank must be positive".into()));
        }
        if self.training_trials < rank {
            return Err(Error::InvalidParameter(format!(
                "training_trials {} below rank {rank}",
                self.training_trials
            )));
        }
        if self.trial_count < self.training_trials {
            return Err(Error::InvalidParameter(format!(
                "trial_count {} below training_trials {}",
                self.trial_count, self.training_trials
            )));
        }
        Ok(())
    }

    fn plan(&self) -> Result<PermutationPlan> {
        PermutationPlan::new(self.trial_count, self.master_seed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub observed_s: f64,
    pub permutation_s: f64,
    pub training_s: f64,
    pub bias_s: f64,
    pub recovery_s: f64,
    pub null_s: f64,
    pub total_s: f64,
}

/// Statistic entries evaluated by the engine, by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCounts {
    /// The unpermuted statistic, `v`.
    pub observed: u64,
    /// Entries of fully computed trials: `v·T` (full) or `v·T₀` (fast).
    pub full_columns: u64,
    /// `Σ_t |Ω_t|` over recovered trials.
    pub sampled: u64,
    /// `full_columns + sampled`.
    pub permutation_total: u64,
    /// `v·T`, the cost of the exact test.
    pub full_equivalent: u64,
    /// `full_equivalent / permutation_total`.
    pub count_ratio: f64,
}

impl EvaluationCounts {
    fn new(observed: u64, full_columns: u64, sampled: u64, full_equivalent: u64) -> Self {
        let permutation_total = full_columns + sampled;
        Self {
            observed,
            full_columns,
            sampled,
            permutation_total,
            full_equivalent,
            count_ratio: full_equivalent as f64 / permutation_total as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub alpha: f64,
    /// `None` when `T · α` is below one trial.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSummary {
    pub max: f64,
    pub argmax: usize,
    pub p_value: f64,
    /// Corrected p-value of every feature.
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub rank: usize,
    pub sampling_rate: f64,
    pub training_rate: f64,
    pub mask_size: usize,
    pub passes: usize,
    pub energy_history: Vec<f64>,
    pub sigma2: f64,
    pub bias_shift: f64,
    pub rank_deficient_trials: usize,
    /// Whether the basis came from a saved bundle.
    pub preloaded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdError {
    pub alpha: f64,
    pub full: Option<f64>,
    pub recovered: Option<f64>,
    pub naive: Option<f64>,
    pub recovered_abs_error: Option<f64>,
    pub naive_abs_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareMetrics {
    pub kl_recovered: f64,
    pub bd_recovered: f64,
    pub kl_naive: f64,
    pub bd_naive: f64,
    pub threshold_errors: Vec<ThresholdError>,
    pub full_evaluations: u64,
    pub fast_evaluations: u64,
    pub count_speedup: f64,
    pub wall_clock_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    pub mask_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub subjects: usize,
    pub features: usize,
    pub trial_count: usize,
    pub null_maxima: Vec<f64>,
    pub thresholds: Vec<ThresholdRow>,
    pub observed: ObservedSummary,
    pub evaluations: EvaluationCounts,
    pub timings: Timings,
    pub seeds: Seeds,
    pub training: Option<TrainingSummary>,
    pub compare: Option<CompareMetrics>,
    pub config: RunConfig,
}

impl RunReport {
    /// The report with every wall-clock quantity zeroed, for reproducibility
    /// comparisons.
    pub fn without_timings(&self) -> RunReport {
        let mut r = self.clone();
        r.timings = Timings::default();
        if let Some(c) = r.compare.as_mut() {
            c.wall_clock_speedup = 0.0;
        }
        r
    }

    pub fn null(&self) -> Result<MaxNullDistribution> {
        build_null(self.null_maxima.clone(), self.config.bin_width)
    }

    pub fn threshold(&self, alpha: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .find(|r| r.alpha == alpha)
            .and_then(|r| r.threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a report, rejecting other schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Format("report has no schema_version".into()))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(Error::UnsupportedVersion {
                found: found as u32,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Trained basis and residual model plus everything needed to reuse them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBundle {
    pub schema_version: u32,
    pub features: usize,
    pub sampling_rate: f64,
    pub statistic: StatisticKind,
    pub max_mode: MaxMode,
    pub master_seed: u64,
    pub mask_seed: u64,
    pub model: SubspaceModel,
    pub residual: ResidualModel,
}

fn thresholds(null: &MaxNullDistribution, config: &RunConfig) -> Vec<ThresholdRow> {
    config
        .alpha_levels
        .iter()
        .map(|&alpha| ThresholdRow {
            alpha,
            threshold: nulldist::threshold(null, alpha, config.tail).ok(),
        })
        .collect()
}

fn observed_summary(null: &MaxNullDistribution, stats: &[f64], mode: MaxMode) -> ObservedSummary {
    let scaled: Vec<f64> = stats.iter().map(|&s| mode.observed(s)).collect();
    let (argmax, max) = scaled
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best });
    ObservedSummary {
        max,
        argmax,
        p_value: corrected_p_value(null, max),
        p_values: scaled.iter().map(|&x| corrected_p_value(null, x)).collect(),
    }
}

fn observed_statistics(engine: &TStatEngine, data: &LabeledDataset) -> Result<Vec<f64>> {
    Ok(engine.column(data.labels())?.values)
}

#[derive(Debug, Clone)]
pub struct FullOutcome {
    pub report: RunReport,
    pub maxima: Vec<f64>,
}

/// Exact permutation null: every trial evaluated in full.
pub fn run_full(data: &LabeledDataset, config: &RunConfig) -> Result<FullOutcome> {
    config.validate_common()?;
    let start = Instant::now();
    let plan = config.plan()?;
    let engine = TStatEngine::new(data, config.statistic);
    let v = data.feature_count();
    let mut timings = Timings::default();

    let clock = Instant::now();
    let observed = observed_statistics(&engine, data)?;
    timings.observed_s = clock.elapsed().as_secs_f64();
    let after_observed = engine.evaluations();

    let clock = Instant::now();
    let maxima: Vec<f64> = parallel::run(config.workers, || {
        (0..plan.trial_count)
            .into_par_iter()
            .map_init(
                || vec![0.0; v],
                |buf, t| {
                    let labels = permute_labels(&plan, data.labels(), t);
                    engine.column_into(&labels, buf)?;
                    Ok(config.max_mode.reduce(buf))
                },
            )
            .collect::<Result<_>>()
    })?;
    timings.permutation_s = clock.elapsed().as_secs_f64();
    let permuted = engine.evaluations() - after_observed;

    let clock = Instant::now();
    let null = build_null(maxima.clone(), config.bin_width)?;
    let thresholds = thresholds(&null, config);
    let observed = observed_summary(&null, &observed, config.max_mode);
    timings.null_s = clock.elapsed().as_secs_f64();
    timings.total_s = start.elapsed().as_secs_f64();

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        mode: Mode::Full,
        subjects: data.subject_count(),
        features: v,
        trial_count: plan.trial_count,
        null_maxima: maxima.clone(),
        thresholds,
        observed,
        evaluations: EvaluationCounts::new(
            after_observed,
            permuted,
            0,
            (v * plan.trial_count) as u64,
        ),
        timings,
        seeds: Seeds {
            master_seed: config.master_seed,
            mask_seed: config.mask_seed,
        },
        training: None,
        compare: None,
        config: RunConfig {
            mode: Mode::Full,
            ..config.clone()
        },
    };
    Ok(FullOutcome { report, maxima })
}

/// Fully evaluated training block.
struct TrainingPhase {
    p_train: DMatrix<f64>,
    maxima: Vec<f64>,
}

fn training_block(
    engine: &TStatEngine,
    data: &LabeledDataset,
    plan: &PermutationPlan,
    trials: usize,
    workers: Option<usize>,
    mode: MaxMode,
) -> Result<TrainingPhase> {
    let v = data.feature_count();
    let columns: Vec<Vec<f64>> = parallel::run(workers, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let labels = permute_labels(plan, data.labels(), t);
                engine.column(&labels).map(|c| c.values)
            })
            .collect::<Result<_>>()
    })?;
    let mut p_train = DMatrix::zeros(v, trials);
    for (t, c) in columns.iter().enumerate() {
        p_train.column_mut(t).copy_from_slice(c);
    }
    let maxima = columns.iter().map(|c| mode.reduce(c)).collect();
    Ok(TrainingPhase { p_train, maxima })
}

/// Recovery of one trial: samples, completed-column maximum (before the
/// bias shift) and whether the sampled rows were rank deficient.
struct Recovered {
    naive: f64,
    recovered: f64,
    rank_deficient: bool,
    max_abs_error: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn recover_trials(
    engine: &TStatEngine,
    data: &LabeledDataset,
    plan: &PermutationPlan,
    mask: &SamplingMask,
    model: &SubspaceModel,
    residual: &ResidualModel,
    trials: std::ops::Range<usize>,
    config: &RunConfig,
    oracle: Option<&TStatEngine>,
) -> Result<Vec<Recovered>> {
    parallel::run(config.workers, || {
        trials
            .into_par_iter()
            .map(|t| {
                let labels = permute_labels(plan, data.labels(), t);
                let idx = mask.indices(t);
                let samples = engine.sampled(&labels, &idx)?;
                let mut g = rng::stream(config.master_seed, Domain::Residual, t as u64);
                let rec = reconstruct_column(model, residual, &idx, &samples, &mut g)?;
                let max_abs_error = match oracle {
                    Some(exact) => {
                        let truth = exact.column(&labels)?.values;
                        Some(
                            truth
                                .iter()
                                .zip(&rec.estimate)
                                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
                        )
                    }
                    None => None,
                };
                Ok(Recovered {
                    naive: config.max_mode.reduce(&samples),
                    recovered: config.max_mode.reduce(&rec.estimate),
                    rank_deficient: rec.rank_deficient,
                    max_abs_error,
                })
            })
            .collect::<Result<Vec<_>>>()
    })
}

#[derive(Debug, Clone)]
pub struct FastOutcome {
    pub report: RunReport,
    /// Exact maxima of the training trials (empty with a preloaded bundle).
    pub training_maxima: Vec<f64>,
    /// Completed-column maxima of the recovery trials, before the shift.
    pub recovered_maxima: Vec<f64>,
    /// Maxima over the sampled entries alone, for every trial.
    pub naive_maxima: Vec<f64>,
    pub bundle: TrainingBundle,
}

impl FastOutcome {
    pub fn naive_null(&self) -> Result<MaxNullDistribution> {
        build_null(self.naive_maxima.clone(), self.report.config.bin_width)
    }
}

/// Train on the first `T₀` trials, then recover the rest from sparse samples.
///
/// With `bundle`, training is skipped and all `T` trials are recovered with
/// the saved basis and residual model.
pub fn run_fast(
    data: &LabeledDataset,
    config: &RunConfig,
    bundle: Option<&TrainingBundle>,
) -> Result<FastOutcome> {
    let start = Instant::now();
    let preloaded = bundle.is_some();
    config.validate_fast(data.subject_count())?;
    let plan = config.plan()?;
    let v = data.feature_count();
    let t_total = plan.trial_count;
    let engine = TStatEngine::new(data, config.statistic);
    let mut timings = Timings::default();

    let clock = Instant::now();
    let observed = observed_statistics(&engine, data)?;
    timings.observed_s = clock.elapsed().as_secs_f64();
    let after_observed = engine.evaluations();

    let (model, residual, training_maxima, naive_training, first_recovery, mask) = match bundle {
        Some(b) => {
            check_bundle(b, v, config)?;
            let mask = make_mask(config.sampling_rate, v, t_total, config.mask_seed, b.model.rank)?;
            (b.model.clone(), b.residual.clone(), Vec::new(), Vec::new(), 0, mask)
        }
        None => {
            let t0 = config.training_trials;
            let rank = config.resolved_rank(data.subject_count());
            let mask = make_mask(config.sampling_rate, v, t_total, config.mask_seed, rank)?;
            let clock = Instant::now();
            let phase = training_block(&engine, data, &plan, t0, config.workers, config.max_mode)?;
            let train_cfg = TrainingConfig::new(rank, config.resolved_training_rate(), config.master_seed)
                .with_passes(config.passes)
                .with_init(config.basis_init);
            let model = train_basis(&phase.p_train, &train_cfg)?;
            timings.training_s = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let residual = parallel::run(config.workers, || {
                fit_residual_model(&phase.p_train, &model, &mask, config.master_seed, config.max_mode)
            })?;
            timings.bias_s = clock.elapsed().as_secs_f64();
            let naive_training = (0..t0)
                .map(|t| {
                    let col = phase.p_train.column(t);
                    let s: Vec<f64> = mask.indices(t).iter().map(|&i| col[i]).collect();
                    config.max_mode.reduce(&s)
                })
                .collect();
            (model, residual, phase.maxima, naive_training, t0, mask)
        }
    };
    let after_training = engine.evaluations();

    let clock = Instant::now();
    let recovered = recover_trials(
        &engine,
        data,
        &plan,
        &mask,
        &model,
        &residual,
        first_recovery..t_total,
        config,
        None,
    )?;
    timings.recovery_s = clock.elapsed().as_secs_f64();
    let sampled = engine.evaluations() - after_training;

    let clock = Instant::now();
    let recovered_maxima: Vec<f64> = recovered.iter().map(|r| r.recovered).collect();
    let mut maxima = training_maxima.clone();
    maxima.extend(recovered_maxima.iter().map(|m| m + residual.bias_shift));
    let mut naive_maxima = naive_training;
    naive_maxima.extend(recovered.iter().map(|r| r.naive));
    let null = build_null(maxima.clone(), config.bin_width)?;
    let thresholds = thresholds(&null, config);
    let observed = observed_summary(&null, &observed, config.max_mode);
    timings.null_s = clock.elapsed().as_secs_f64();
    timings.total_s = start.elapsed().as_secs_f64();

    let bundle = TrainingBundle {
        schema_version: SCHEMA_VERSION,
        features: v,
        sampling_rate: config.sampling_rate,
        statistic: config.statistic,
        max_mode: config.max_mode,
        master_seed: config.master_seed,
        mask_seed: config.mask_seed,
        model,
        residual,
    };
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        mode: Mode::Fast,
        subjects: data.subject_count(),
        features: v,
        trial_count: t_total,
        null_maxima: maxima,
        thresholds,
        observed,
        evaluations: EvaluationCounts::new(
            after_observed,
            after_training - after_observed,
            sampled,
            (v * t_total) as u64,
        ),
        timings,
        seeds: Seeds {
            master_seed: config.master_seed,
            mask_seed: config.mask_seed,
        },
        training: Some(TrainingSummary {
            rank: bundle.model.rank,
            sampling_rate: config.sampling_rate,
            training_rate: bundle.model.training_rate,
            mask_size: mask.size,
            passes: bundle.model.passes,
            energy_history: bundle.model.energy_history.clone(),
            sigma2: bundle.residual.sigma2,
            bias_shift: bundle.residual.bias_shift,
            rank_deficient_trials: recovered.iter().filter(|r| r.rank_deficient).count(),
            preloaded,
        }),
        compare: None,
        config: RunConfig {
            mode: Mode::Fast,
            ..config.clone()
        },
    };
    Ok(FastOutcome {
        report,
        training_maxima,
        recovered_maxima,
        naive_maxima,
        bundle,
    })
}

fn check_bundle(b: &TrainingBundle, features: usize, config: &RunConfig) -> Result<()> {
    if b.schema_version != SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion {
            found: b.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if b.features != features || b.model.feature_count() != features {
        return Err(Error::DimensionMismatch {
            what: "bundle features vs data features",
            expected: features,
            found: b.features,
        });
    }
    if b.sampling_rate != config.sampling_rate {
        return Err(Error::InvalidParameter(format!(
            "bundle was trained at rate {} but the run uses {}",
            b.sampling_rate, config.sampling_rate
        )));
    }
    if b.statistic != config.statistic || b.max_mode != config.max_mode {
        return Err(Error::InvalidParameter(
            "bundle statistic or max mode differs from the run".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub report: RunReport,
    pub full: FullOutcome,
    pub fast: FastOutcome,
}

fn abs_diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

/// Runs both modes on the same seeds and scores the recovered and naive
/// nulls against the exact one.
pub fn run_compare(data: &LabeledDataset, config: &RunConfig) -> Result<CompareOutcome> {
    let full = run_full(data, config)?;
    let fast = run_fast(data, config, None)?;
    let metrics = compare_metrics(&full, &fast, config)?;
    let mut report = fast.report.clone();
    report.mode = Mode::Compare;
    report.config.mode = Mode::Compare;
    report.compare = Some(metrics);
    Ok(CompareOutcome { report, full, fast })
}

fn compare_metrics(full: &FullOutcome, fast: &FastOutcome, config: &RunConfig) -> Result<CompareMetrics> {
    let truth = full.report.null()?;
    let recovered = fast.report.null()?;
    let naive = fast.naive_null()?;
    let threshold_errors = config
        .alpha_levels
        .iter()
        .map(|&alpha| {
            let t = |n: &MaxNullDistribution| nulldist::threshold(n, alpha, config.tail).ok();
            let (f, r, n) = (t(&truth), t(&recovered), t(&naive));
            ThresholdError {
                alpha,
                full: f,
                recovered: r,
                naive: n,
                recovered_abs_error: abs_diff(f, r),
                naive_abs_error: abs_diff(f, n),
            }
        })
        .collect();
    let full_evals = full.report.evaluations.permutation_total;
    let fast_evals = fast.report.evaluations.permutation_total;
    Ok(CompareMetrics {
        kl_recovered: nulldist::kl_divergence(&truth, &recovered)?,
        bd_recovered: nulldist::bhattacharyya(&truth, &recovered)?,
        kl_naive: nulldist::kl_divergence(&truth, &naive)?,
        bd_naive: nulldist::bhattacharyya(&truth, &naive)?,
        threshold_errors,
        full_evaluations: full_evals,
        fast_evaluations: fast_evals,
        count_speedup: full_evals as f64 / fast_evals as f64,
        wall_clock_speedup: full.report.timings.total_s / fast.report.timings.total_s,
    })
}

/// Twenty log-spaced sampling rates from 0.1% to 10%.
pub fn standard_rates() -> Vec<f64> {
    let (lo, hi) = (0.001f64.ln(), 0.1f64.ln());
    (0..20)
        .map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub mask_size: usize,
    pub kl_recovered: f64,
    pub bd_recovered: f64,
    pub kl_naive: f64,
    pub bd_naive: f64,
    pub threshold_errors: Vec<ThresholdError>,
    pub count_speedup: f64,
    pub wall_clock_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub rows: Vec<SweepRow>,
    /// Rates rejected by the oversampling floor.
    pub skipped: Vec<f64>,
}

/// One exact run, then one fast run per rate, each scored against it.
pub fn rate_sweep(data: &LabeledDataset, config: &RunConfig, rates: &[f64]) -> Result<SweepReport> {
    let full = run_full(data, config)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &rate in rates {
        let cfg = RunConfig {
            sampling_rate: rate,
            training_rate: config.training_rate,
            ..config.clone()
        };
        let fast = match run_fast(data, &cfg, None) {
            Ok(f) => f,
            Err(Error::InsufficientSamples { .. }) => {
                skipped.push(rate);
                continue;
            }
            Err(e) => return Err(e),
        };
        let m = compare_metrics(&full, &fast, &cfg)?;
        rows.push(SweepRow {
            rate,
            mask_size: fast.report.training.as_ref().map_or(0, |t| t.mask_size),
            kl_recovered: m.kl_recovered,
            bd_recovered: m.bd_recovered,
            kl_naive: m.kl_naive,
            bd_naive: m.bd_naive,
            threshold_errors: m.threshold_errors,
            count_speedup: m.count_speedup,
            wall_clock_speedup: m.wall_clock_speedup,
        });
    }
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        rows,
        skipped,
    })
}

/// Recovery measured against the exact columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecovery {
    /// `m_t` for the recovery trials.
    pub true_maxima: Vec<f64>,
    /// `m̂_t` before the shift.
    pub recovered_maxima: Vec<f64>,
    /// `max_i |P_it − P̂_it|` per recovery trial.
    pub max_abs_errors: Vec<f64>,
    /// Largest entrywise reconstruction error over all recovery trials.
    pub epsilon: f64,
    /// `b̂`, from the training replay.
    pub bias_shift: f64,
    /// `b`, the mean gap over the recovery trials.
    pub bias: f64,
    pub training_true_maxima: Vec<f64>,
    pub training_recovered_maxima: Vec<f64>,
}

impl OracleRecovery {
    pub fn gaps(&self) -> Vec<f64> {
        self.true_maxima
            .iter()
            .zip(&self.recovered_maxima)
            .map(|(m, mh)| m - mh)
            .collect()
    }
}

/// Fast-mode training and recovery with every recovery column also
/// evaluated exactly, so reconstruction errors can be measured.
pub fn oracle_recovery(data: &LabeledDataset, config: &RunConfig) -> Result<OracleRecovery> {
    config.validate_fast(data.subject_count())?;
    let plan = config.plan()?;
    let v = data.feature_count();
    let engine = TStatEngine::new(data, config.statistic);
    let t0 = config.training_trials;
    let rank = config.resolved_rank(data.subject_count());
    let mask = make_mask(config.sampling_rate, v, plan.trial_count, config.mask_seed, rank)?;
    let phase = training_block(&engine, data, &plan, t0, config.workers, config.max_mode)?;
    let train_cfg = TrainingConfig::new(rank, config.resolved_training_rate(), config.master_seed)
        .with_passes(config.passes)
        .with_init(config.basis_init);
    let model = train_basis(&phase.p_train, &train_cfg)?;
    let sigma2 = crate::residual::estimate_sigma2(
        model.training_residuals.as_ref().expect("fresh model keeps residuals"),
    )?;
    let replay = parallel::run(config.workers, || {
        crate::residual::estimate_bias(&phase.p_train, &model, &mask, sigma2, config.master_seed, config.max_mode)
    })?;
    let residual = ResidualModel {
        sigma2,
        bias_shift: replay.bias_shift,
        training_trials: t0,
        per_trial_max_gap: replay.gaps.clone(),
    };
    let recovered = recover_trials(
        &engine,
        data,
        &plan,
        &mask,
        &model,
        &residual,
        t0..plan.trial_count,
        config,
        Some(&engine),
    )?;
    let true_maxima: Vec<f64> = parallel::run(config.workers, || {
        (t0..plan.trial_count)
            .into_par_iter()
            .map(|t| {
                let labels = permute_labels(&plan, data.labels(), t);
                engine.column(&labels).map(|c| config.max_mode.reduce(&c.values))
            })
            .collect::<Result<_>>()
    })?;
    let recovered_maxima: Vec<f64> = recovered.iter().map(|r| r.recovered).collect();
    let max_abs_errors: Vec<f64> = recovered.iter().map(|r| r.max_abs_error.unwrap_or(0.0)).collect();
    let n = true_maxima.len().max(1) as f64;
    let bias = true_maxima
        .iter()
        .zip(&recovered_maxima)
        .map(|(m, mh)| m - mh)
        .sum::<f64>()
        / n;
    Ok(OracleRecovery {
        epsilon: max_abs_errors.iter().copied().fold(0.0, f64::max),
        true_maxima,
        recovered_maxima,
        max_abs_errors,
        bias_shift: replay.bias_shift,
        bias,
        training_true_maxima: replay.true_maxima,
        training_recovered_maxima: replay.recovered_maxima,
    })
}
