//! Anchor function, pairwise transportation-cost indexes and the empirical
//! statistics they are evaluated on.
//!
//! Every function here accepts real-valued allocations so that the fluid
//! model can share them with the discrete samplers.

use serde::{Deserialize, Serialize};

use crate::error::{BaiError, Result};
use crate::spef::{argmax, SpefFamily, GAP_TOLERANCE};

/// Allocation-weighted mean `(n1 mu1 + na mua) / (n1 + na)`.
pub fn weighted_mid(n1: f64, na: f64, mu1: f64, mua: f64) -> Result<f64> {
    check_counts(n1, na)?;
    Ok(mid_raw(n1, na, mu1, mua))
}

#[inline]
pub(crate) fn mid_raw(n1: f64, na: f64, mu1: f64, mua: f64) -> f64 {
    let x = (n1 * mu1 + na * mua) / (n1 + na);
    // keep x inside [min, max] under rounding
    x.clamp(mu1.min(mua), mu1.max(mua))
}

fn check_counts(n1: f64, na: f64) -> Result<()> {
    if !(n1 >= 0.0 && na >= 0.0 && n1.is_finite() && na.is_finite()) {
        return Err(BaiError::Degenerate(format!("allocations must be finite and >= 0, got ({n1}, {na})")));
    }
    if n1 + na == 0.0 {
        return Err(BaiError::Degenerate("both allocations are zero".into()));
    }
    Ok(())
}

/// Transportation cost `n1 d(mu1, x) + na d(mua, x)` at the weighted mid `x`,
/// which is also its minimum over `x` between the two means.
pub fn index_value(family: SpefFamily, n1: f64, na: f64, mu1: f64, mua: f64) -> Result<f64> {
    check_counts(n1, na)?;
    family.check_closure(mu1)?;
    family.check_closure(mua)?;
    Ok(index_raw(family, n1, na, mu1, mua))
}

#[inline]
pub(crate) fn index_raw(family: SpefFamily, n1: f64, na: f64, mu1: f64, mua: f64) -> f64 {
    if (mu1 - mua).abs() < GAP_TOLERANCE || n1 == 0.0 || na == 0.0 {
        return 0.0;
    }
    if let SpefFamily::Gaussian { sigma } = family {
        let gap = mu1 - mua;
        return n1 * na / (n1 + na) * gap * gap / (2.0 * sigma * sigma);
    }
    let x = mid_raw(n1, na, mu1, mua);
    n1 * family.kl_raw(mu1, x) + na * family.kl_raw(mua, x)
}

/// `d(mu_best, z) / d(mu_a, z)` for one challenger.
#[inline]
pub(crate) fn ratio_raw(family: SpefFamily, n_best: f64, na: f64, mu_best: f64, mua: f64) -> f64 {
    if na == 0.0 {
        return 0.0;
    }
    if n_best == 0.0 {
        return f64::INFINITY;
    }
    if (mu_best - mua).abs() < GAP_TOLERANCE {
        let r = na / n_best;
        return r * r;
    }
    if let SpefFamily::Gaussian { .. } = family {
        let r = na / n_best;
        return r * r;
    }
    let z = mid_raw(n_best, na, mu_best, mua);
    family.kl_raw(mu_best, z) / family.kl_raw(mua, z)
}

/// Anchor function: the ratio sum over challengers minus one.
///
/// `best` must be the argmax of `means`. The value is `+inf` when the best arm
/// has no allocation while some challenger does; a challenger with zero
/// allocation contributes nothing.
pub fn anchor(family: SpefFamily, means: &[f64], counts: &[f64], best: usize) -> Result<f64> {
    if means.len() != counts.len() || best >= means.len() {
        return Err(BaiError::Degenerate("means / counts length mismatch".into()));
    }
    if counts.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
        return Err(BaiError::Degenerate("allocations must be finite and >= 0".into()));
    }
    if counts.iter().all(|&n| n == 0.0) {
        return Err(BaiError::Degenerate("all allocations are zero".into()));
    }
    for &m in means {
        family.check_closure(m)?;
    }
    Ok(anchor_raw(family, means, counts, best))
}

pub(crate) fn anchor_raw(family: SpefFamily, means: &[f64], counts: &[f64], best: usize) -> f64 {
    let mut sum = 0.0;
    for a in (0..means.len()).filter(|&a| a != best) {
        sum += ratio_raw(family, counts[best], counts[a], means[best], means[a]);
    }
    sum - 1.0
}

/// Pull counts and reward sums of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingState {
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    total: u64,
}

impl SamplingState {
    pub fn new(num_arms: usize) -> Self {
        SamplingState { counts: vec![0; num_arms], reward_sums: vec![0.0; num_arms], total: 0 }
    }

    /// Rebuilds a state from explicit counts and sums.
    pub fn from_parts(counts: Vec<u64>, reward_sums: Vec<f64>) -> Result<Self> {
        if counts.len() != reward_sums.len() || counts.len() < 2 {
            return Err(BaiError::Degenerate("counts and sums must have equal length >= 2".into()));
        }
        let total = counts.iter().sum();
        Ok(SamplingState { counts, reward_sums, total })
    }

    pub fn record(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.reward_sums[arm] += reward;
        self.total += 1;
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mean(&self, arm: usize) -> Option<f64> {
        (self.counts[arm] > 0).then(|| self.reward_sums[arm] / self.counts[arm] as f64)
    }

    pub fn all_pulled(&self) -> bool {
        self.counts.iter().all(|&c| c > 0)
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Empirical means; `None` while some arm is unpulled.
    pub fn means(&self) -> Option<Vec<f64>> {
        (0..self.counts.len()).map(|a| self.mean(a)).collect()
    }
}

/// Empirical indexes of every challenger of the empirical best arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub best_arm: usize,
    /// `(arm, index)` for every arm other than `best_arm`, in id order.
    pub indexes: Vec<(usize, f64)>,
    pub anchor_value: f64,
    pub min_index: f64,
    pub min_index_arm: usize,
}

impl IndexReport {
    pub fn index_of(&self, arm: usize) -> Option<f64> {
        self.indexes.iter().find(|(a, _)| *a == arm).map(|&(_, v)| v)
    }

    /// Indexes divided by the total number of pulls.
    pub fn normalized(&self, total: f64) -> Vec<(usize, f64)> {
        self.indexes.iter().map(|&(a, v)| (a, v / total)).collect()
    }
}

/// Index report at the empirical means of `state`.
pub fn empirical_report(family: SpefFamily, state: &SamplingState) -> Result<IndexReport> {
    let means = state
        .means()
        .ok_or_else(|| BaiError::Degenerate("every arm must be pulled before reporting".into()))?;
    for &m in &means {
        family.check_closure(m)?;
    }
    Ok(report_raw(family, &means, &state.counts_f64()))
}

pub(crate) fn report_raw(family: SpefFamily, means: &[f64], counts: &[f64]) -> IndexReport {
    let best = argmax(means);
    let mut indexes = Vec::with_capacity(means.len() - 1);
    let mut min_index = f64::INFINITY;
    let mut min_index_arm = usize::MAX;
    let mut ratio_sum = 0.0;
    for a in (0..means.len()).filter(|&a| a != best) {
        let v = index_raw(family, counts[best], counts[a], means[best], means[a]);
        ratio_sum += ratio_raw(family, counts[best], counts[a], means[best], means[a]);
        if v < min_index {
            min_index = v;
            min_index_arm = a;
        }
        indexes.push((a, v));
    }
    IndexReport { best_arm: best, indexes, anchor_value: ratio_sum - 1.0, min_index, min_index_arm }
}

/// Generalized log-likelihood ratio statistic: the smallest empirical index.
pub fn stopping_statistic(report: &IndexReport) -> f64 {
    report.min_index
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const G: SpefFamily = SpefFamily::Gaussian { sigma: 1.0 };

    #[test]
    fn weighted_mid_cases() {
        assert_eq!(weighted_mid(1.0, 1.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(weighted_mid(3.0, 0.0, 5.0, 7.0).unwrap(), 5.0);
        let expected = (2.0 * 7.25 + 7.05) / 3.0;
        assert_relative_eq!(weighted_mid(2.0, 1.0, 7.25, 7.05).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 7.183333333333333, max_relative = 1e-15);
        assert!(weighted_mid(0.0, 0.0, 1.0, 2.0).is_err());
        assert!(weighted_mid(-1.0, 2.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn index_closed_forms() {
        let d = 0.7;
        assert_relative_eq!(index_value(G, 0.5, 0.5, d, 0.0).unwrap(), d * d / 8.0, max_relative = 1e-14);
        assert_eq!(index_value(G, 3.0, 0.0, 1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(index_value(G, 2.0, 1.0, 10.0, 9.4).unwrap(), 0.12, max_relative = 1e-12);
        assert!(index_value(G, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(index_value(SpefFamily::Bernoulli, 1.0, 1.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn index_matches_grid_minimum() {
        // 10^4-point grid over [9.4, 10]
        let f = |x: f64| 2.0 * G.kl_raw(10.0, x) + G.kl_raw(9.4, x);
        let grid = (0..=10_000).map(|i| f(9.4 + 0.6 * i as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(grid, 0.12, max_relative = 1e-6);
    }

    #[test]
    fn anchor_closed_forms() {
        assert_eq!(anchor(G, &[1.0, 0.0], &[3.0, 3.0], 0).unwrap(), 0.0);
        assert_relative_eq!(anchor(G, &[1.0, 0.0, 0.5], &[2.0, 1.0, 1.0], 0).unwrap(), -0.5);
        assert_eq!(anchor(G, &[1.0, 0.0, 0.5], &[0.0, 1.0, 0.0], 0).unwrap(), f64::INFINITY);
        assert_eq!(anchor(G, &[1.0, 0.0, 0.5], &[1.0, 0.0, 0.0], 0).unwrap(), -1.0);
        assert!(anchor(G, &[1.0, 0.0], &[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn report_two_arms() {
        let state = SamplingState::from_parts(vec![1, 1], vec![1.0, 0.0]).unwrap();
        let r = empirical_report(G, &state).unwrap();
        assert_eq!(r.best_arm, 0);
        assert_relative_eq!(r.index_of(1).unwrap(), 0.25);
        assert_eq!(r.anchor_value, 0.0);
        assert_eq!(stopping_statistic(&r), 0.25);
    }

    #[test]
    fn report_with_equal_means_uses_degenerate_limits() {
        let state = SamplingState::from_parts(vec![2, 1, 3], vec![1.0, 0.5, 1.5]).unwrap();
        let r = empirical_report(G, &state).unwrap();
        assert_eq!(r.best_arm, 0);
        assert!(r.indexes.iter().all(|&(_, v)| v == 0.0));
        assert_relative_eq!(r.anchor_value, 0.25 + 2.25 - 1.0);
        assert_eq!(r.min_index_arm, 1);

        let b = SpefFamily::Bernoulli;
        let r = empirical_report(b, &state).unwrap();
        assert_relative_eq!(r.anchor_value, 1.5);
    }

    #[test]
    fn report_requires_every_arm() {
        let state = SamplingState::from_parts(vec![1, 0], vec![1.0, 0.0]).unwrap();
        assert!(empirical_report(G, &state).is_err());
    }

    #[test]
    fn boundary_empirical_means_stay_finite() {
        // all-zero and all-one Bernoulli samples
        let state = SamplingState::from_parts(vec![4, 3, 2], vec![4.0, 0.0, 1.0]).unwrap();
        let r = empirical_report(SpefFamily::Bernoulli, &state).unwrap();
        assert!(r.indexes.iter().all(|&(_, v)| v.is_finite() && v > 0.0));
        assert!(r.anchor_value.is_finite());
    }

    #[test]
    fn stopping_statistic_is_the_minimum() {
        let report = IndexReport {
            best_arm: 0,
            indexes: vec![(2, 5.0), (3, 4.2), (4, 6.1)],
            anchor_value: 0.0,
            min_index: 4.2,
            min_index_arm: 3,
        };
        assert_eq!(stopping_statistic(&report), 4.2);
        let r = report_raw(G, &[1.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(r.min_index_arm, 1);
        assert_eq!(stopping_statistic(&r), r.indexes[0].1);
    }
}
