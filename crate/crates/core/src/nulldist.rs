//! Max-statistic null distributions: histograms, thresholds, corrected
//! p-values and histogram divergences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Histogram resolution used for nulls and comparisons.
pub const DEFAULT_BIN_WIDTH: f64 = 0.01;

/// Significance levels reported by default.
pub const STANDARD_ALPHAS: [f64; 4] = [0.05, 0.01, 0.005, 0.001];

/// Which per-trial maximum forms the null.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxMode {
    /// `max_i t_i` over signed statistics.
    #[default]
    Upper,
    /// `max_i |t_i|`.
    Absolute,
}

impl MaxMode {
    pub fn reduce(self, column: &[f64]) -> f64 {
        match self {
            MaxMode::Upper => column_max(column),
            MaxMode::Absolute => column.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.abs())),
        }
    }

    /// Maps an observed statistic onto the scale of the maxima.
    pub fn observed(self, stat: f64) -> f64 {
        match self {
            MaxMode::Upper => stat,
            MaxMode::Absolute => stat.abs(),
        }
    }
}

pub fn column_max(column: &[f64]) -> f64 {
    column.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

/// Quantile convention for thresholds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `1 - α` quantile.
    #[default]
    OneSided,
    /// `1 - α/2` quantile.
    TwoSided,
}

impl Tail {
    fn tail_mass(self, alpha: f64) -> f64 {
        match self {
            Tail::OneSided => alpha,
            Tail::TwoSided => alpha / 2.0,
        }
    }
}

#[inline]
fn bin_index(x: f64, width: f64) -> i64 {
    (x / width).floor() as i64
}

/// Per-trial maxima and their fixed-width histogram. Bin `k` covers
/// `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxNullDistribution {
    samples: Vec<f64>,
    sorted: Vec<f64>,
    bin_width: f64,
    first_bin: i64,
    counts: Vec<u64>,
}

/// One histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

pub fn build_null(max_samples: Vec<f64>, bin_width: f64) -> Result<MaxNullDistribution> {
    if max_samples.is_empty() {
        return Err(Error::InvalidParameter("null needs at least one sample".into()));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width {bin_width} must be positive")));
    }
    if let Some(pos) = max_samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue { row: pos, column: 0 });
    }
    let mut sorted = max_samples.clone();
    sorted.sort_by(f64::total_cmp);
    let first_bin = bin_index(sorted[0], bin_width);
    let last_bin = bin_index(sorted[sorted.len() - 1], bin_width);
    let mut counts = vec![0u64; (last_bin - first_bin + 1) as usize];
    for &x in &max_samples {
        counts[(bin_index(x, bin_width) - first_bin) as usize] += 1;
    }
    Ok(MaxNullDistribution {
        samples: max_samples,
        sorted,
        bin_width,
        first_bin,
        counts,
    })
}

impl MaxNullDistribution {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn trial_count(&self) -> usize {
        self.samples.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn first_bin(&self) -> i64 {
        self.first_bin
    }

    pub fn bins(&self) -> Vec<Bin> {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &count)| {
                let idx = self.first_bin + k as i64;
                Bin {
                    left: idx as f64 * self.bin_width,
                    right: (idx + 1) as f64 * self.bin_width,
                    count,
                }
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Mean of the histogram using bin midpoints.
    pub fn histogram_mean(&self) -> f64 {
        let total: u64 = self.counts.iter().sum();
        self.bins()
            .iter()
            .map(|b| 0.5 * (b.left + b.right) * b.count as f64)
            .sum::<f64>()
            / total as f64
    }

    /// Empirical quantile: the order statistic at 1-based index `⌈q·T⌉`.
    pub fn quantile(&self, q: f64) -> f64 {
        let t = self.sorted.len();
        let rank = ((q * t as f64) - 1e-9).ceil().clamp(1.0, t as f64) as usize;
        self.sorted[rank - 1]
    }

    /// Counts on bins `[first, first + len)`.
    fn counts_on(&self, first: i64, len: usize) -> Vec<u64> {
        let mut out = vec![0u64; len];
        let offset = (self.first_bin - first) as usize;
        out[offset..offset + self.counts.len()].copy_from_slice(&self.counts);
        out
    }
}

/// FWER threshold at level `alpha`.
pub fn threshold(null: &MaxNullDistribution, alpha: f64, tail: Tail) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    let mass = tail.tail_mass(alpha);
    let t = null.trial_count();
    if (t as f64) * mass < 1.0 - 1e-12 {
        return Err(Error::InsufficientTrials {
            trials: t,
            required: (1.0 / mass - 1e-9).ceil() as usize,
        });
    }
    Ok(null.quantile(1.0 - mass))
}

/// `(#{m_t ≥ observed} + 1) / (T + 1)`.
pub fn corrected_p_value(null: &MaxNullDistribution, observed: f64) -> f64 {
    let t = null.sorted.len();
    let below = null.sorted.partition_point(|&m| m < observed);
    ((t - below) as f64 + 1.0) / (t as f64 + 1.0)
}

/// Smoothed probabilities of both histograms on their common bins. Every bin
/// receives `ε = 1/(10·max(T_p, T_q))` before renormalisation.
pub fn aligned_probabilities(
    p: &MaxNullDistribution,
    q: &MaxNullDistribution,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.bin_width != q.bin_width {
        return Err(Error::InvalidParameter(format!(
            "bin widths differ ({} vs {})",
            p.bin_width, q.bin_width
        )));
    }
    let first = p.first_bin.min(q.first_bin);
    let last = (p.first_bin + p.counts.len() as i64).max(q.first_bin + q.counts.len() as i64);
    let len = (last - first) as usize;
    let eps = 1.0 / (10.0 * p.trial_count().max(q.trial_count()) as f64);
    let smooth = |counts: Vec<u64>, total: usize| -> Vec<f64> {
        let norm = 1.0 + len as f64 * eps;
        counts
            .into_iter()
            .map(|c| (c as f64 / total as f64 + eps) / norm)
            .collect()
    };
    Ok((
        smooth(p.counts_on(first, len), p.trial_count()),
        smooth(q.counts_on(first, len), q.trial_count()),
    ))
}

/// `Σ p_b ln(p_b / q_b)` over strictly positive probability vectors.
pub fn kl_from_probabilities(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pb, _)| pb > 0.0)
        .map(|(&pb, &qb)| pb * (pb / qb).ln())
        .sum()
}

/// `-ln Σ √(p_b q_b)`.
pub fn bhattacharyya_from_probabilities(p: &[f64], q: &[f64]) -> f64 {
    if p == q {
        return 0.0;
    }
    let bc: f64 = p.iter().zip(q).map(|(&a, &b)| (a * b).sqrt()).sum();
    -bc.min(1.0).ln()
}

/// KL divergence of `q` from the reference `p`, after smoothing.
pub fn kl_divergence(p: &MaxNullDistribution, q: &MaxNullDistribution) -> Result<f64> {
    let (pp, qq) = aligned_probabilities(p, q)?;
    Ok(kl_from_probabilities(&pp, &qq).max(0.0))
}

/// Bhattacharyya distance between two nulls, after smoothing.
pub fn bhattacharyya(p: &MaxNullDistribution, q: &MaxNullDistribution) -> Result<f64> {
    let (pp, qq) = aligned_probabilities(p, q)?;
    Ok(bhattacharyya_from_probabilities(&pp, &qq))
}

/// Baseline null from the sampled entries only: per-trial maxima of the
/// sparse columns, with no completion.
pub fn naive_null(
    sampled_columns: &[Vec<f64>],
    bin_width: f64,
    mode: MaxMode,
) -> Result<MaxNullDistribution> {
    if sampled_columns.iter().any(Vec::is_empty) {
        return Err(Error::InvalidParameter("empty sampled column".into()));
    }
    build_null(
        sampled_columns.iter().map(|c| mode.reduce(c)).collect(),
        bin_width,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn column_max_basics() {
        assert_eq!(column_max(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(column_max(&[-1.2, 3.4, 2.0]), 3.4);
        assert_eq!(MaxMode::Absolute.reduce(&[-5.0, 3.4]), 5.0);
    }

    #[test]
    fn single_sample_single_bin() {
        let null = build_null(vec![1.234], 0.01).unwrap();
        assert_eq!(null.counts(), &[1]);
    }

    #[test]
    fn adjacent_bins() {
        let null = build_null(vec![0.005, 0.015], 0.01).unwrap();
        assert_eq!(null.counts(), &[1, 1]);
        let bins = null.bins();
        assert_relative_eq!(bins[0].left, 0.0);
        assert_relative_eq!(bins[1].left, 0.01);
        assert_relative_eq!(bins[1].right, 0.02);
    }

    #[test]
    fn build_null_rejects_bad_input() {
        assert!(build_null(vec![], 0.01).is_err());
        assert!(build_null(vec![1.0], 0.0).is_err());
        assert!(build_null(vec![f64::NAN], 0.01).is_err());
    }

    #[test]
    fn order_statistic_threshold() {
        let null = build_null((1..=100).map(f64::from).collect(), 0.01).unwrap();
        assert_eq!(threshold(&null, 0.05, Tail::OneSided).unwrap(), 95.0);
        assert_eq!(threshold(&null, 0.01, Tail::OneSided).unwrap(), 99.0);
        assert_eq!(threshold(&null, 0.05, Tail::TwoSided).unwrap(), 98.0);
    }

    #[test]
    fn constant_samples_threshold_is_constant() {
        let null = build_null(vec![2.5; 1000], 0.01).unwrap();
        for alpha in STANDARD_ALPHAS {
            assert_eq!(threshold(&null, alpha, Tail::OneSided).unwrap(), 2.5);
        }
    }

    #[test]
    fn half_alpha_is_median() {
        let null = build_null(vec![5.0, 1.0, 4.0, 2.0, 3.0], 0.01).unwrap();
        assert_eq!(threshold(&null, 0.5, Tail::OneSided).unwrap(), 3.0);
    }

    #[test]
    fn too_few_trials_for_alpha() {
        let null = build_null((0..50).map(f64::from).collect(), 0.01).unwrap();
        assert!(matches!(
            threshold(&null, 0.01, Tail::OneSided),
            Err(Error::InsufficientTrials { trials: 50, required: 100 })
        ));
        assert!(threshold(&null, 0.02, Tail::OneSided).is_ok());
        assert!(threshold(&null, 0.0, Tail::OneSided).is_err());
    }

    #[test]
    fn p_value_extremes_and_median() {
        let null = build_null((1..=99).map(f64::from).collect(), 0.01).unwrap();
        assert_relative_eq!(corrected_p_value(&null, 1000.0), 1.0 / 100.0);
        assert_relative_eq!(corrected_p_value(&null, -1.0), 1.0);
        // 50 of the 99 maxima are at least 50
        assert_relative_eq!(corrected_p_value(&null, 50.0), 0.51);
    }

    #[test]
    fn hand_computed_kl() {
        let kl = kl_from_probabilities(&[0.5, 0.5], &[0.9, 0.1]);
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert_relative_eq!(kl, expected, epsilon = 1e-15);
        assert_relative_eq!(kl, 0.5108256237659907, epsilon = 1e-12);
    }

    #[test]
    fn histogram_kl_close_to_raw_probabilities() {
        // counts (5, 5) vs (9, 1) on two bins; smoothing moves the value slightly
        let p = build_null(vec![0.001, 0.002, 0.003, 0.004, 0.005, 0.011, 0.012, 0.013, 0.014, 0.015], 0.01).unwrap();
        let mut qs = vec![0.001; 9];
        qs.push(0.011);
        let q = build_null(qs, 0.01).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        let eps: f64 = 0.01;
        let norm = 1.0 + 2.0 * eps;
        let ps = [(0.5 + eps) / norm, (0.5 + eps) / norm];
        let qs = [(0.9 + eps) / norm, (0.1 + eps) / norm];
        let expected: f64 = ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum();
        assert_relative_eq!(kl, expected, epsilon = 1e-12);
        assert!((kl - 0.5108256).abs() < 0.05, "{kl}");
    }

    #[test]
    fn identical_histograms_have_zero_divergence() {
        let a = build_null(vec![1.0, 1.01, 1.02, 1.5], 0.01).unwrap();
        let b = build_null(vec![1.5, 1.02, 1.01, 1.0], 0.01).unwrap();
        assert_eq!(kl_divergence(&a, &b).unwrap(), 0.0);
        assert_eq!(bhattacharyya(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_histograms_bhattacharyya_closed_form() {
        // T = 1000 samples each, all in one bin, bins disjoint
        let p = build_null(vec![0.005; 1000], 0.01).unwrap();
        let q = build_null(vec![0.015; 1000], 0.01).unwrap();
        let eps: f64 = 1.0 / 10_000.0;
        let bd = bhattacharyya(&p, &q).unwrap();
        // exact under the smoothing used here
        let exact = -(2.0 * (eps * (1.0 + eps)).sqrt() / (1.0 + 2.0 * eps)).ln();
        assert_relative_eq!(bd, exact, epsilon = 1e-12);
        // small-ε approximation
        let approx = -(2.0 * (eps * (1.0 - eps)).sqrt()).ln();
        assert!((bd - approx).abs() / approx < 1e-3);
        assert_relative_eq!(bd, bhattacharyya(&q, &p).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_maxima_match_expected_maximum() {
        use crate::rng::{self, Domain};
        use rand::Rng;
        use rand_distr::StandardNormal;

        // E[max of 100 iid N(0,1)] by numerical quadrature of 1 - Φ(x)^100
        fn phi_cdf(x: f64) -> f64 {
            0.5 * erfc(-x / std::f64::consts::SQRT_2)
        }
        fn erfc(x: f64) -> f64 {
            // Numerical Recipes erfcc, relative error < 1.2e-7
            let z = x.abs();
            let t = 1.0 / (1.0 + 0.5 * z);
            let r = t * (-z * z - 1.26551223
                + t * (1.00002368
                    + t * (0.37409196
                        + t * (0.09678418
                            + t * (-0.18628806
                                + t * (0.27886807
                                    + t * (-1.13520398
                                        + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
                .exp();
            if x >= 0.0 { r } else { 2.0 - r }
        }
        let h = 1e-3;
        let mut expected = 0.0;
        let mut x = -10.0;
        while x < 10.0 {
            let f = |y: f64| if y >= 0.0 { 1.0 - phi_cdf(y).powi(100) } else { -phi_cdf(y).powi(100) };
            expected += h * 0.5 * (f(x) + f(x + h));
            x += h;
        }

        let mut g = rng::stream(31, Domain::Synthetic, 0);
        let maxima: Vec<f64> = (0..100_000)
            .map(|_| (0..100).map(|_| g.sample::<f64, _>(StandardNormal)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let null = build_null(maxima, 0.01).unwrap();
        assert_eq!(null.counts().iter().sum::<u64>(), 100_000);
        let hist_mean = null.histogram_mean();
        assert!((hist_mean - expected).abs() / expected < 0.01, "{hist_mean} vs {expected}");
    }

    #[test]
    fn naive_null_full_columns_equals_true_null() {
        let cols = vec![vec![1.0, 2.0, 0.5], vec![0.2, 0.1, 0.3]];
        let naive = naive_null(&cols, 0.01, MaxMode::Upper).unwrap();
        let exact = build_null(vec![2.0, 0.3], 0.01).unwrap();
        assert_eq!(naive, exact);
    }
}
