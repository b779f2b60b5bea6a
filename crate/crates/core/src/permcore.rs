//! Two-sample t-statistics and label-permutation trials.
//!
//! [`TStatEngine`] centres every feature once and keeps the per-feature sums
//! that do not depend on the labelling. A permutation trial then costs one
//! pass over the group-1 rows: the pooled within-group sum of squares follows
//! from the total sum of squares and the group sums. The dense column path and
//! the masked path accumulate each feature in the same subject order, so a
//! masked evaluation is bit-identical to the corresponding dense entries.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::{self, Domain};

/// Within-group sum of squares at or below this fraction of the total sum of
/// squares is treated as exactly zero.
pub const ZERO_VARIANCE_RTOL: f64 = 1e-12;

/// Subjects × features measurements with a binary group label per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    values: DMatrix<f64>,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(values: DMatrix<f64>, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                what: "label count vs data rows",
                expected: values.nrows(),
                found: labels.len(),
            });
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidParameter("dataset has no features".into()));
        }
        for (row, &label) in labels.iter().enumerate() {
            if label > 1 {
                return Err(Error::InvalidLabel {
                    row,
                    value: label.to_string(),
                });
            }
        }
        for column in 0..values.ncols() {
            for row in 0..values.nrows() {
                if !values[(row, column)].is_finite() {
                    return Err(Error::NonFiniteValue { row, column });
                }
            }
        }
        GroupSplit::from_labels(&labels)?;
        Ok(Self { values, labels })
    }

    /// Builds a dataset from one slice of feature values per subject.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let n = rows.len();
        let v = rows.first().map_or(0, Vec::len);
        for row in rows {
            if row.len() != v {
                return Err(Error::DimensionMismatch {
                    what: "features per subject",
                    expected: v,
                    found: row.len(),
                });
            }
        }
        let values = DMatrix::from_fn(n, v, |i, j| rows[i][j]);
        Self::new(values, labels)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn subject_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.values.ncols()
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.values * factor, self.labels.clone())
    }
}

/// Which two-sample statistic is evaluated per feature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    /// Equal-variance t with the pooled `n0 + n1 - 2` variance.
    #[default]
    Pooled,
    Welch,
}

/// Group-1 membership of a labelling, in ascending subject order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSplit {
    members: Vec<usize>,
    n0: usize,
    n1: usize,
}

impl GroupSplit {
    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(j, &l)| (l == 1).then_some(j))
            .collect();
        let n1 = members.len();
        let n0 = labels.len() - n1;
        if n0 < 2 || n1 < 2 {
            return Err(Error::DegenerateLabels {
                group0: n0,
                group1: n1,
            });
        }
        Ok(Self { members, n0, n1 })
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.n0, self.n1)
    }
}

/// One column of statistics plus the features whose variance vanished.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticColumn {
    pub values: Vec<f64>,
    pub zero_variance: Vec<usize>,
}

/// Precomputed, label-independent state for repeated t-statistic evaluation.
#[derive(Debug)]
pub struct TStatEngine {
    kind: StatisticKind,
    subjects: usize,
    features: usize,
    /// Subject-major centred values: `centered[j * features + i]`.
    centered: Vec<f64>,
    totals: Vec<f64>,
    sumsq: Vec<f64>,
    constant: Vec<bool>,
    evaluations: AtomicU64,
}

impl TStatEngine {
    pub fn new(data: &LabeledDataset, kind: StatisticKind) -> Self {
        let n = data.subject_count();
        let v = data.feature_count();
        let values = data.values();
        let mut centered = vec![0.0; n * v];
        let mut totals = vec![0.0; v];
        let mut sumsq = vec![0.0; v];
        let mut constant = vec![false; v];
        for i in 0..v {
            let column = values.column(i);
            let first = column[0];
            constant[i] = column.iter().all(|&x| x == first);
            let mean = column.sum() / n as f64;
            let mut total = 0.0;
            let mut squares = 0.0;
            for j in 0..n {
                let c = column[j] - mean;
                centered[j * v + i] = c;
                total += c;
                squares += c * c;
            }
            totals[i] = total;
            sumsq[i] = squares;
        }
        Self {
            kind,
            subjects: n,
            features: v,
            centered,
            totals,
            sumsq,
            constant,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    pub fn feature_count(&self) -> usize {
        self.features
    }

    pub fn subject_count(&self) -> usize {
        self.subjects
    }

    /// Number of single-feature statistics evaluated so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn check_labels(&self, labels: &[u8]) -> Result<GroupSplit> {
        if labels.len() != self.subjects {
            return Err(Error::DimensionMismatch {
                what: "label count vs data rows",
                expected: self.subjects,
                found: labels.len(),
            });
        }
        GroupSplit::from_labels(labels)
    }

    /// Statistic for feature `i` from its group-1 sum (and sum of squares for
    /// Welch). Returns `None` when the variance estimate is zero.
    fn finish(&self, i: usize, split: &GroupSplit, s1: f64, sq1: f64) -> Option<f64> {
        if self.constant[i] {
            return None;
        }
        let n0 = split.n0 as f64;
        let n1 = split.n1 as f64;
        let q = self.sumsq[i];
        let s0 = self.totals[i] - s1;
        let diff = s0 / n0 - s1 / n1;
        let floor = ZERO_VARIANCE_RTOL * q;
        match self.kind {
            StatisticKind::Pooled => {
                let within = q - s0 * s0 / n0 - s1 * s1 / n1;
                if within <= floor {
                    return None;
                }
                let pooled = within / (n0 + n1 - 2.0);
                Some(diff / (pooled * (1.0 / n0 + 1.0 / n1)).sqrt())
            }
            StatisticKind::Welch => {
                let ss1 = (sq1 - s1 * s1 / n1).max(0.0);
                let ss0 = (q - sq1 - s0 * s0 / n0).max(0.0);
                let se2 = ss0 / (n0 - 1.0) / n0 + ss1 / (n1 - 1.0) / n1;
                if ss0 + ss1 <= floor {
                    return None;
                }
                Some(diff / se2.sqrt())
            }
        }
    }

    /// Writes the full statistic column for `labels` into `out`, returning the
    /// zero-variance features.
    pub fn column_into(&self, labels: &[u8], out: &mut [f64]) -> Result<Vec<usize>> {
        let split = self.check_labels(labels)?;
        assert_eq!(out.len(), self.features, "output length must equal feature count");
        let v = self.features;
        let mut s1 = vec![0.0; v];
        let mut sq1 = match self.kind {
            StatisticKind::Welch => vec![0.0; v],
            StatisticKind::Pooled => Vec::new(),
        };
        for &j in &split.members {
            let row = &self.centered[j * v..(j + 1) * v];
            for (acc, &x) in s1.iter_mut().zip(row) {
                *acc += x;
            }
            if !sq1.is_empty() {
                for (acc, &x) in sq1.iter_mut().zip(row) {
                    *acc += x * x;
                }
            }
        }
        let mut zero = Vec::new();
        for i in 0..v {
            let sq = sq1.get(i).copied().unwrap_or(0.0);
            out[i] = match self.finish(i, &split, s1[i], sq) {
                Some(t) => t,
                None => {
                    zero.push(i);
                    0.0
                }
            };
        }
        self.evaluations.fetch_add(v as u64, Ordering::Relaxed);
        Ok(zero)
    }

    pub fn column(&self, labels: &[u8]) -> Result<StatisticColumn> {
        let mut values = vec![0.0; self.features];
        let zero_variance = self.column_into(labels, &mut values)?;
        Ok(StatisticColumn {
            values,
            zero_variance,
        })
    }

    /// Statistics for the features in `mask` only (any order, no duplicates
    /// required). Touches nothing outside the mask.
    pub fn sampled(&self, labels: &[u8], mask: &[usize]) -> Result<Vec<f64>> {
        let split = self.check_labels(labels)?;
        let v = self.features;
        let mut out = Vec::with_capacity(mask.len());
        for &i in mask {
            if i >= v {
                return Err(Error::InvalidParameter(format!(
                    "mask index {i} out of range for {v} features"
                )));
            }
            let mut s1 = 0.0;
            let mut sq1 = 0.0;
            for &j in &split.members {
                let x = self.centered[j * v + i];
                s1 += x;
                if self.kind == StatisticKind::Welch {
                    sq1 += x * x;
                }
            }
            out.push(self.finish(i, &split, s1, sq1).unwrap_or(0.0));
        }
        self.evaluations
            .fetch_add(mask.len() as u64, Ordering::Relaxed);
        Ok(out)
    }
}

/// Per-feature two-sample t-statistics (group 0 minus group 1) under `labels`.
pub fn t_statistic(
    data: &LabeledDataset,
    labels: &[u8],
    kind: StatisticKind,
) -> Result<StatisticColumn> {
    TStatEngine::new(data, kind).column(labels)
}

/// How permutation trials are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub trial_count: usize,
    pub master_seed: u64,
    pub include_identity: bool,
}

impl PermutationPlan {
    pub fn new(trial_count: usize, master_seed: u64) -> Result<Self> {
        if trial_count == 0 {
            return Err(Error::InvalidParameter("trial count must be at least 1".into()));
        }
        Ok(Self {
            trial_count,
            master_seed,
            include_identity: false,
        })
    }

    pub fn with_identity(mut self, include_identity: bool) -> Self {
        self.include_identity = include_identity;
        self
    }
}

/// Labels for trial `trial`: a uniform shuffle of `original` keyed by
/// `(master_seed, trial)`, or `original` itself for trial 0 when the plan
/// includes the identity.
pub fn permute_labels(plan: &PermutationPlan, original: &[u8], trial: usize) -> Vec<u8> {
    let mut labels = original.to_vec();
    if plan.include_identity && trial == 0 {
        return labels;
    }
    let mut rng = rng::stream(plan.master_seed, Domain::Permutation, trial as u64);
    labels.shuffle(&mut rng);
    labels
}

/// Dense `features × trials` matrix of permuted statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationMatrix {
    pub stats: DMatrix<f64>,
    pub master_seed: u64,
    /// Stream index used for each column.
    pub trial_streams: Vec<u64>,
}

impl PermutationMatrix {
    pub fn feature_count(&self) -> usize {
        self.stats.nrows()
    }

    pub fn trial_count(&self) -> usize {
        self.stats.ncols()
    }
}

/// Evaluates every trial of `plan` in full. Output does not depend on
/// `workers`.
pub fn full_permutation_test(
    data: &LabeledDataset,
    plan: &PermutationPlan,
    kind: StatisticKind,
    workers: Option<usize>,
) -> Result<PermutationMatrix> {
    let engine = TStatEngine::new(data, kind);
    let v = data.feature_count();
    let columns: Vec<Vec<f64>> = parallel::run(workers, || {
        (0..plan.trial_count)
            .into_par_iter()
            .map(|t| {
                let labels = permute_labels(plan, data.labels(), t);
                engine.column(&labels).map(|c| c.values)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut stats = DMatrix::zeros(v, plan.trial_count);
    for (t, column) in columns.iter().enumerate() {
        stats.column_mut(t).copy_from_slice(column);
    }
    Ok(PermutationMatrix {
        stats,
        master_seed: plan.master_seed,
        trial_streams: (0..plan.trial_count as u64).collect(),
    })
}

/// Largest number of assignments [`exhaustive_assignments`] will enumerate.
pub const MAX_EXHAUSTIVE: usize = 1_000_000;

/// Every distinct relabelling with the same group sizes as `original`, in
/// lexicographic order of the group-1 index sets.
pub fn exhaustive_assignments(original: &[u8]) -> Result<Vec<Vec<u8>>> {
    let n = original.len();
    let k = original.iter().filter(|&&l| l == 1).count();
    let mut count: u128 = 1;
    for i in 0..k as u128 {
        count = count * (n as u128 - i) / (i + 1);
        if count > MAX_EXHAUSTIVE as u128 {
            return Err(Error::InvalidParameter(format!(
                "more than {MAX_EXHAUSTIVE} assignments to enumerate"
            )));
        }
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut labels = vec![0u8; n];
        for &i in &idx {
            labels[i] = 1;
        }
        out.push(labels);
        // next k-combination
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
    Ok(out)
}

/// The exact permutation distribution: one column per distinct assignment,
/// ordered as [`exhaustive_assignments`].
pub fn exhaustive_permutation_test(
    data: &LabeledDataset,
    kind: StatisticKind,
    workers: Option<usize>,
) -> Result<PermutationMatrix> {
    let assignments = exhaustive_assignments(data.labels())?;
    let engine = TStatEngine::new(data, kind);
    let columns: Vec<Vec<f64>> = parallel::run(workers, || {
        assignments
            .par_iter()
            .map(|labels| engine.column(labels).map(|c| c.values))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut stats = DMatrix::zeros(data.feature_count(), columns.len());
    for (t, column) in columns.iter().enumerate() {
        stats.column_mut(t).copy_from_slice(column);
    }
    Ok(PermutationMatrix {
        stats,
        master_seed: 0,
        trial_streams: (0..columns.len() as u64).collect(),
    })
}

/// Entries of trial `trial`'s column restricted to `mask`, computed without
/// evaluating any other feature.
pub fn subsampled_column(
    engine: &TStatEngine,
    original: &[u8],
    plan: &PermutationPlan,
    trial: usize,
    mask: &[usize],
) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return Err(Error::InvalidParameter("sampling mask is empty".into()));
    }
    let labels = permute_labels(plan, original, trial);
    engine.sampled(&labels, mask)
}
