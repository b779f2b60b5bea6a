//! Synthetic subject × feature data: a planted low-rank structure plus
//! independent Gaussian feature noise.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permcore::LabeledDataset;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub features: usize,
    /// Rank of the planted structure shared across features.
    pub planted_rank: usize,
    /// Scale of the planted component.
    pub signal_scale: f64,
    /// Standard deviation of the independent per-entry noise.
    pub noise_sd: f64,
    /// Mean shift added to group 1 on the first `effect_features` features.
    pub group_effect: f64,
    pub effect_features: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            subjects: 30,
            features: 10_000,
            planted_rank: 5,
            signal_scale: 1.0,
            noise_sd: 1.0,
            group_effect: 0.0,
            effect_features: 0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn new(subjects: usize, features: usize, seed: u64) -> Self {
        Self {
            subjects,
            features,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.subjects < 4 {
            return Err(Error::InsufficientSamples {
                samples: self.subjects,
                required: 4,
            });
        }
        if self.features == 0 {
            return Err(Error::InvalidParameter("features must be positive".into()));
        }
        if self.planted_rank > self.subjects.min(self.features) {
            return Err(Error::RankTooHigh {
                rank: self.planted_rank,
                max: self.subjects.min(self.features),
            });
        }
        if self.effect_features > self.features {
            return Err(Error::InvalidParameter(
                "effect_features exceeds feature count".into(),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.signal_scale >= 0.0 && self.group_effect.is_finite()) {
            return Err(Error::InvalidParameter("scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Balanced labels: the first `n/2` subjects are group 0.
pub fn balanced_labels(subjects: usize) -> Vec<u8> {
    (0..subjects).map(|i| u8::from(i >= subjects / 2)).collect()
}

/// `X = scale · L B + noise`, with `L` (n × k) and `B` (k × v) standard
/// normal, normalised so the planted part has unit variance per entry.
pub fn generate(config: &SyntheticConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let (n, v, k) = (config.subjects, config.features, config.planted_rank);
    let mut g = rng::stream(config.seed, Domain::Synthetic, 0);
    let mut normal = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| g.sample::<f64, _>(StandardNormal));
    let loadings: DMatrix<f64> = normal(n, k);
    let basis: DMatrix<f64> = normal(k, v);
    let mut values = if k > 0 {
        loadings * basis * (config.signal_scale / (k as f64).sqrt())
    } else {
        DMatrix::zeros(n, v)
    };
    // noise drawn feature by feature so prefixes are stable in v
    let mut noise_rng = rng::stream(config.seed, Domain::Synthetic, 1);
    for j in 0..v {
        for i in 0..n {
            values[(i, j)] += config.noise_sd * noise_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let labels = balanced_labels(n);
    for j in 0..config.effect_features {
        for (i, &l) in labels.iter().enumerate() {
            if l == 1 {
                values[(i, j)] += config.group_effect;
            }
        }
    }
    LabeledDataset::new(values, labels)
}
