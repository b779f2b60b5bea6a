//! Family-wise error control by the maximum-statistic permutation test, with
//! the permutation null recovered from a few percent of its entries.
//!
//! Most permuted t-statistic columns are never computed in full. A short
//! block of training permutations is evaluated exactly and fixes a low-rank
//! basis, a residual variance and a bias shift. Every later permutation
//! evaluates a random subset of features, is completed in the basis, and
//! contributes its (shifted) maximum to the null.
//!
//! Modules:
//!
//! * [`permcore`]: t-statistic engine, permutation plans, exact and
//!   subsampled columns.
//! * [`subspace`]: sampling masks, basis training, least-squares completion.
//! * [`residual`]: residual variance and max-bias estimation.
//! * [`nulldist`]: max-null histograms, thresholds, p-values, KL and
//!   Bhattacharyya comparisons.
//! * [`rmt`]: spiked-model spectral predictions and their simulation checks.
//! * [`pipeline`]: full / fast / compare runs, rate sweeps, reports.
//! * [`io`]: CSV and binary ingest, bundles, output tables.
//! * [`synth`]: synthetic low-rank-plus-noise data.
//!
//! ```
//! use fastperm::pipeline::{run_fast, RunConfig};
//! use fastperm::synth::{generate, SyntheticConfig};
//!
//! let data = generate(&SyntheticConfig::new(12, 2_000, 1)).unwrap();
//! let config = RunConfig { training_trials: 40, ..RunConfig::new(200, 0.05) };
//! let out = run_fast(&data, &config, None).unwrap();
//! assert_eq!(out.report.null_maxima.len(), 200);
//! println!("5% threshold: {:?}", out.report.threshold(0.05));
//! ```
//!
//! The `examples/` directory has one runnable program per capability.

pub mod error;
pub mod io;
pub mod matrix_serde;
pub mod nulldist;
pub mod parallel;
pub mod permcore;
pub mod pipeline;
pub mod residual;
pub mod rmt;
pub mod rng;
pub mod subspace;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
pub use nulldist::{MaxMode, MaxNullDistribution, Tail};
pub use permcore::{LabeledDataset, PermutationPlan, StatisticKind, TStatEngine};
pub use pipeline::{Mode, RunConfig, RunReport, TrainingBundle};
pub use residual::ResidualModel;
pub use subspace::{SamplingMask, SubspaceModel};
