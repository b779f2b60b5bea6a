//! Low-rank basis estimation and column completion from sparse samples.
//!
//! Training starts from a basis (the leading left singular vectors of the
//! fully sampled training columns, or a random orthonormal frame) and then
//! runs incremental Grassmannian updates over the training columns, each seen
//! through a fresh random mask per pass. A pass is kept only if it does not
//! lower the fraction of training energy captured by the basis, so the
//! recorded energy history is non-decreasing.
//!
//! Recovery fits each column's coefficients by least squares on its sampled
//! rows, keeps the sampled entries verbatim and fills the rest with the
//! low-rank estimate plus Gaussian residual noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual::ResidualModel;
use crate::rng::{self, Domain};

/// Minimum number of sampled entries per column, as a multiple of the rank.
pub const OVERSAMPLING_FLOOR: usize = 3;

/// Training stops once a pass improves captured energy by less than this.
pub const CONVERGENCE_TOL: f64 = 1e-4;

/// Default number of fully computed training trials.
pub const DEFAULT_TRAINING_TRIALS: usize = 100;

/// Default number of training passes.
pub const DEFAULT_PASSES: usize = 3;

const ORTHONORMALITY_TOL: f64 = 1e-8;
const RANK_RTOL: f64 = 1e-10;

/// Per-trial uniform subsets of the features, all of the same size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub rate: f64,
    pub size: usize,
    pub features: usize,
    pub trials: usize,
    pub mask_seed: u64,
    #[serde(skip, default = "default_mask_domain")]
    domain: Domain,
}

fn default_mask_domain() -> Domain {
    Domain::Mask
}

/// `round(rate * features)`, validated against the oversampling floor.
pub fn mask_size(rate: f64, features: usize, rank: usize) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate {rate} outside (0, 1]"
        )));
    }
    let size = (rate * features as f64).round() as usize;
    let required = (OVERSAMPLING_FLOOR * rank).max(1);
    if size < required {
        return Err(Error::InsufficientSamples {
            samples: size,
            required,
        });
    }
    Ok(size.min(features))
}

impl SamplingMask {
    pub fn new(rate: f64, features: usize, trials: usize, mask_seed: u64, rank: usize) -> Result<Self> {
        let size = mask_size(rate, features, rank)?;
        Ok(Self {
            rate,
            size,
            features,
            trials,
            mask_seed,
            domain: Domain::Mask,
        })
    }

    fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn is_full(&self) -> bool {
        self.size == self.features
    }

    /// Sorted sampled feature indices for trial `trial`.
    pub fn indices(&self, trial: usize) -> Vec<usize> {
        if self.is_full() {
            return (0..self.features).collect();
        }
        let mut rng = rng::stream(self.mask_seed, self.domain, trial as u64);
        let mut idx = rand::seq::index::sample(&mut rng, self.features, self.size).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Recovery-phase masks for `trials` columns of length `features`.
pub fn make_mask(rate: f64, features: usize, trials: usize, mask_seed: u64, rank: usize) -> Result<SamplingMask> {
    SamplingMask::new(rate, features, trials, mask_seed, rank)
}

/// How the basis is initialised before the subsampled passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisInit {
    /// Leading left singular vectors of the training columns.
    #[default]
    TruncatedSvd,
    /// Random orthonormal frame; all structure comes from the passes.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub rank: usize,
    pub rate: f64,
    pub passes: usize,
    pub seed: u64,
    pub init: BasisInit,
}

impl TrainingConfig {
    pub fn new(rank: usize, rate: f64, seed: u64) -> Self {
        Self {
            rank,
            rate,
            passes: DEFAULT_PASSES,
            seed,
            init: BasisInit::default(),
        }
    }

    pub fn with_passes(mut self, passes: usize) -> Self {
        self.passes = passes;
        self
    }

    pub fn with_init(mut self, init: BasisInit) -> Self {
        self.init = init;
        self
    }
}

/// Orthonormal rank-`r` basis learned from the training trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    #[serde(with = "crate::matrix_serde")]
    pub basis: DMatrix<f64>,
    pub rank: usize,
    pub training_trials: usize,
    /// Passes that were run and accepted.
    pub passes: usize,
    /// Captured energy fraction after initialisation and after each accepted pass.
    pub energy_history: Vec<f64>,
    pub training_rate: f64,
    pub seed: u64,
    /// `P_train - U Uᵀ P_train`; not persisted.
    #[serde(skip)]
    pub training_residuals: Option<DMatrix<f64>>,
}

impl SubspaceModel {
    pub fn feature_count(&self) -> usize {
        self.basis.nrows()
    }

    /// Largest entry of `|UᵀU - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.basis)
    }

    pub fn captured_energy(&self) -> f64 {
        *self.energy_history.last().unwrap_or(&0.0)
    }
}

fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let gram = u.tr_mul(u);
    let r = gram.nrows();
    (&gram - DMatrix::identity(r, r)).amax()
}

/// `‖UᵀP‖²_F / ‖P‖²_F` (1 for an all-zero `P`).
pub fn captured_energy(u: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let total = p.norm_squared();
    if total == 0.0 {
        return 1.0;
    }
    u.tr_mul(p).norm_squared() / total
}

fn random_frame(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, Domain::BasisInit, 0);
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Thin orthonormalisation; columns that collapse are replaced by random
/// directions orthogonal to the rest.
fn orthonormalize(u: DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let (rows, cols) = u.shape();
    let qr = u.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    let degenerate = (0..cols).any(|k| r[(k, k)].abs() <= RANK_RTOL * scale) || scale == 0.0;
    let mut q = qr.q();
    if degenerate {
        let filler = random_frame(rows, cols, seed ^ 0x5eed);
        for k in 0..cols {
            if scale == 0.0 || r[(k, k)].abs() <= RANK_RTOL * scale {
                q.set_column(k, &filler.column(k));
            }
        }
        q = q.qr().q();
    }
    q
}

fn svd_init(p: &DMatrix<f64>, rank: usize, seed: u64) -> DMatrix<f64> {
    let gram = p.tr_mul(p);
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut u = DMatrix::zeros(p.nrows(), rank);
    for (k, &idx) in order.iter().take(rank).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda > RANK_RTOL * top && lambda > 0.0 {
            let col = p * eig.eigenvectors.column(idx) / lambda.sqrt();
            u.set_column(k, &col);
        }
    }
    let u = orthonormalize(u, seed);
    // one refinement sweep against the data itself to shed Gram round-off
    orthonormalize(p * (p.tr_mul(&u)), seed)
}

/// One incremental Grassmannian update from the sampled entries of `column`.
fn grouse_step(u: &mut DMatrix<f64>, column: &[f64], mask: &[usize]) {
    let fit = fit_coefficients(u, mask, &mask.iter().map(|&i| column[i]).collect::<Vec<_>>());
    let w = DVector::from_vec(fit.coefficients);
    let w_norm = w.norm();
    if w_norm == 0.0 {
        return;
    }
    let p = &*u * &w;
    let p_norm = p.norm();
    let mut residual = DVector::zeros(u.nrows());
    for &i in mask {
        residual[i] = column[i] - p[i];
    }
    let r_norm = residual.norm();
    if p_norm == 0.0 || r_norm <= 1e-14 * p_norm {
        return;
    }
    let theta = (r_norm / p_norm).atan();
    let direction = p * ((theta.cos() - 1.0) / p_norm) + residual * (theta.sin() / r_norm);
    u.ger(1.0 / w_norm, &direction, &w, 1.0);
}

/// Learns an orthonormal rank-`config.rank` basis for the columns of `p_train`.
pub fn train_basis(p_train: &DMatrix<f64>, config: &TrainingConfig) -> Result<SubspaceModel> {
    let (v, t0) = p_train.shape();
    let rank = config.rank;
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    if rank > v.min(t0) {
        return Err(Error::RankTooHigh {
            rank,
            max: v.min(t0),
        });
    }
    let mask = SamplingMask::new(config.rate, v, t0, config.seed, rank)?.with_domain(Domain::TrainingMask);

    let mut u = match config.init {
        BasisInit::TruncatedSvd => svd_init(p_train, rank, config.seed),
        BasisInit::Random => random_frame(v, rank, config.seed),
    };
    let mut energy = captured_energy(&u, p_train);
    let mut history = vec![energy];
    let mut accepted = 0;

    for pass in 1..=config.passes {
        let mut candidate = u.clone();
        for t in 0..t0 {
            let column = p_train.column(t);
            let indices = mask.indices(pass * t0 + t);
            grouse_step(&mut candidate, column.as_slice(), &indices);
        }
        let candidate = orthonormalize(candidate, config.seed.wrapping_add(pass as u64));
        let candidate_energy = captured_energy(&candidate, p_train);
        if candidate_energy < energy {
            break;
        }
        let gain = candidate_energy - energy;
        u = candidate;
        energy = candidate_energy;
        history.push(energy);
        accepted += 1;
        if gain < CONVERGENCE_TOL {
            break;
        }
    }

    debug_assert!(orthonormality_error(&u) <= ORTHONORMALITY_TOL);
    let projection = &u * u.tr_mul(p_train);
    let residuals = p_train - projection;
    Ok(SubspaceModel {
        basis: u,
        rank,
        training_trials: t0,
        passes: accepted,
        energy_history: history,
        training_rate: config.rate,
        seed: config.seed,
        training_residuals: Some(residuals),
    })
}

/// Least-squares coefficients plus whether the sampled rows were rank
/// deficient (in which case the minimum-norm solution is returned).
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub rank_deficient: bool,
}

/// `argmin_w ‖samples - U[mask, :] w‖₂` via Householder QR, falling back to
/// an SVD pseudo-inverse when `U[mask, :]` loses column rank.
pub fn fit_coefficients(basis: &DMatrix<f64>, mask: &[usize], samples: &[f64]) -> LeastSquaresFit {
    assert_eq!(mask.len(), samples.len(), "one sample per mask index");
    let r = basis.ncols();
    let rows = DMatrix::from_fn(mask.len(), r, |k, c| basis[(mask[k], c)]);
    let b = DVector::from_column_slice(samples);

    if mask.len() >= r {
        let qr = rows.clone().qr();
        let rmat = qr.r();
        let diag = rmat.diagonal();
        let scale = diag.amax();
        if scale > 0.0 && diag.iter().all(|d| d.abs() > RANK_RTOL * scale) {
            let mut qtb = b.clone();
            qr.q_tr_mul(&mut qtb);
            let rhs = qtb.rows(0, r).into_owned();
            if let Some(w) = rmat.solve_upper_triangular(&rhs) {
                return LeastSquaresFit {
                    coefficients: w.as_slice().to_vec(),
                    rank_deficient: false,
                };
            }
        }
    }

    let svd = rows.svd(true, true);
    let eps = RANK_RTOL * svd.singular_values.amax().max(f64::MIN_POSITIVE);
    let w = svd
        .solve(&b, eps)
        .unwrap_or_else(|_| DVector::zeros(r));
    LeastSquaresFit {
        coefficients: w.as_slice().to_vec(),
        rank_deficient: true,
    }
}

/// A completed column.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredColumn {
    pub estimate: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub observed: Vec<usize>,
    pub rank_deficient: bool,
}

impl RecoveredColumn {
    pub fn max(&self) -> f64 {
        crate::nulldist::column_max(&self.estimate)
    }
}

/// Completes a column from `samples` observed at the sorted indices `mask`.
///
/// Observed entries are copied verbatim. Every other entry is `(U w)[i]` plus
/// an independent `N(0, σ̂²)` draw from `noise`, taken in ascending index
/// order.
pub fn reconstruct_column<R: Rng + ?Sized>(
    model: &SubspaceModel,
    residual: &ResidualModel,
    mask: &[usize],
    samples: &[f64],
    noise: &mut R,
) -> Result<RecoveredColumn> {
    let v = model.feature_count();
    if mask.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            what: "samples vs mask indices",
            expected: mask.len(),
            found: samples.len(),
        });
    }
    if mask.windows(2).any(|w| w[0] >= w[1]) || mask.last().is_some_and(|&i| i >= v) {
        return Err(Error::InvalidParameter(
            "mask indices must be strictly increasing and within the feature range".into(),
        ));
    }
    if mask.len() < model.rank {
        return Err(Error::InsufficientSamples {
            samples: mask.len(),
            required: model.rank,
        });
    }
    let fit = fit_coefficients(&model.basis, mask, samples);
    let w = DVector::from_column_slice(&fit.coefficients);
    let mut estimate: Vec<f64> = (&model.basis * &w).data.into();
    let sd = residual.sigma2.max(0.0).sqrt();
    let mut next = 0;
    for (i, value) in estimate.iter_mut().enumerate() {
        if next < mask.len() && mask[next] == i {
            *value = samples[next];
            next += 1;
        } else if sd > 0.0 {
            let z: f64 = noise.sample(StandardNormal);
            *value += sd * z;
        }
    }
    Ok(RecoveredColumn {
        estimate,
        coefficients: fit.coefficients,
        observed: mask.to_vec(),
        rank_deficient: fit.rank_deficient,
    })
}
