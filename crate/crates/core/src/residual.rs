//! Residual variance and the sample-max bias shift.
//!
//! The residual variance comes from the full training residuals, not from the
//! subsampled fits, which see far too few entries to estimate it. Recovering
//! a column from a sparse mask still pulls its maximum towards zero; the
//! training trials are replayed through the recovery path to measure that
//! pull, and the mean gap becomes a scalar shift for every recovered maximum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nulldist::MaxMode;
use crate::rng::{self, Domain};
use crate::subspace::{reconstruct_column, SamplingMask, SubspaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    /// Variance of the residual entries about zero.
    pub sigma2: f64,
    /// Mean of `m_t - m̂_t` over the training trials.
    pub bias_shift: f64,
    pub training_trials: usize,
    pub per_trial_max_gap: Vec<f64>,
}

impl ResidualModel {
    pub fn zero() -> Self {
        Self::with_sigma2(0.0)
    }

    pub fn with_sigma2(sigma2: f64) -> Self {
        Self {
            sigma2,
            bias_shift: 0.0,
            training_trials: 0,
            per_trial_max_gap: Vec::new(),
        }
    }
}

/// Mean of the squared entries (the residual mean is zero by assumption).
pub fn estimate_sigma2(residuals: &DMatrix<f64>) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidParameter("residual matrix is empty".into()));
    }
    Ok(residuals.norm_squared() / residuals.len() as f64)
}

/// Training-set replay of the recovery path.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasEstimate {
    pub bias_shift: f64,
    pub true_maxima: Vec<f64>,
    pub recovered_maxima: Vec<f64>,
    pub gaps: Vec<f64>,
}

/// Subsamples each training column with `mask`, completes it with residual
/// noise of variance `sigma2`, and averages `m_t - m̂_t`.
pub fn estimate_bias(
    p_train: &DMatrix<f64>,
    model: &SubspaceModel,
    mask: &SamplingMask,
    sigma2: f64,
    seed: u64,
    mode: MaxMode,
) -> Result<BiasEstimate> {
    let (v, t0) = p_train.shape();
    if v != model.feature_count() || mask.features != v {
        return Err(Error::DimensionMismatch {
            what: "training features vs basis rows",
            expected: model.feature_count(),
            found: v,
        });
    }
    if t0 == 0 {
        return Err(Error::InvalidParameter("no training trials".into()));
    }
    let noise = ResidualModel::with_sigma2(sigma2);
    let pairs: Vec<(f64, f64)> = (0..t0)
        .into_par_iter()
        .map(|t| {
            let column = p_train.column(t);
            let idx = mask.indices(t);
            let samples: Vec<f64> = idx.iter().map(|&i| column[i]).collect();
            let mut g = rng::stream(seed, Domain::BiasSimulation, t as u64);
            let rec = reconstruct_column(model, &noise, &idx, &samples, &mut g)?;
            Ok((mode.reduce(column.as_slice()), mode.reduce(&rec.estimate)))
        })
        .collect::<Result<_>>()?;
    let (true_maxima, recovered_maxima): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let gaps: Vec<f64> = true_maxima
        .iter()
        .zip(&recovered_maxima)
        .map(|(m, mh)| m - mh)
        .collect();
    let bias_shift = gaps.iter().sum::<f64>() / t0 as f64;
    Ok(BiasEstimate {
        bias_shift,
        true_maxima,
        recovered_maxima,
        gaps,
    })
}

/// σ̂² from the model's training residuals, then b̂ by replay.
pub fn fit_residual_model(
    p_train: &DMatrix<f64>,
    model: &SubspaceModel,
    mask: &SamplingMask,
    seed: u64,
    mode: MaxMode,
) -> Result<ResidualModel> {
    let sigma2 = match &model.training_residuals {
        Some(s) => estimate_sigma2(s)?,
        None => {
            let u = &model.basis;
            estimate_sigma2(&(p_train - u * u.tr_mul(p_train)))?
        }
    };
    let bias = estimate_bias(p_train, model, mask, sigma2, seed, mode)?;
    Ok(ResidualModel {
        sigma2,
        bias_shift: bias.bias_shift,
        training_trials: p_train.ncols(),
        per_trial_max_gap: bias.gaps,
    })
}

/// `maxima + shift`, elementwise.
pub fn apply_bias(maxima: &[f64], shift: f64) -> Vec<f64> {
    maxima.iter().map(|m| m + shift).collect()
}
