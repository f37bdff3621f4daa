//! Top-two sampling policies with forced exploration and GLLR stopping.
//!
//! At iteration `N` every policy first pulls the least-sampled arm while some
//! arm has fewer than `N^alpha` pulls. Otherwise:
//!
//! * AT2 / IAT2 pull the empirical best arm when the empirical anchor is
//!   positive and the challenger with the smallest index otherwise (IAT2 adds
//!   `ln N_a` to each index before taking the minimum);
//! * beta-EB-TCB / beta-EB-ITCB pull the empirical best arm with probability
//!   `beta` and the same challenger otherwise.
//!
//! A run stops at the first `N` where the smallest empirical index exceeds
//! the threshold `beta(N, delta)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor_index::{index_raw, report_raw, IndexReport, SamplingState};
use crate::error::{BaiError, Result};
use crate::rng::{StreamRole, Substream};
use crate::spef::{BanditInstance, SpefFamily};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SamplingRule {
    At2,
    Iat2,
    BetaEb { beta: f64, improved: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    #[serde(flatten)]
    pub rule: SamplingRule,
    pub alpha: f64,
}

impl Policy {
    pub fn at2() -> Self {
        Policy { rule: SamplingRule::At2, alpha: DEFAULT_ALPHA }
    }

    pub fn iat2() -> Self {
        Policy { rule: SamplingRule::Iat2, alpha: DEFAULT_ALPHA }
    }

    pub fn beta_eb(beta: f64, improved: bool) -> Self {
        Policy { rule: SamplingRule::BetaEb { beta, improved }, alpha: DEFAULT_ALPHA }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Policy { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BaiError::Config(format!("exploration exponent must lie in (0, 1), got {}", self.alpha)));
        }
        if let SamplingRule::BetaEb { beta, .. } = self.rule {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(BaiError::Config(format!("beta must lie in (0, 1), got {beta}")));
            }
        }
        Ok(())
    }

    pub fn needs_coin(&self) -> bool {
        matches!(self.rule, SamplingRule::BetaEb { .. })
    }

    fn improved_challenger(&self) -> bool {
        match self.rule {
            SamplingRule::At2 => false,
            SamplingRule::Iat2 => true,
            SamplingRule::BetaEb { improved, .. } => improved,
        }
    }
}

/// Display names follow the usual table labels: `AT2`, `IAT2`, `0.5-EB-TCB`, `0.5-EB-ITCB`.
impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            SamplingRule::At2 => f.write_str("AT2"),
            SamplingRule::Iat2 => f.write_str("IAT2"),
            SamplingRule::BetaEb { beta, improved: false } => write!(f, "{beta}-EB-TCB"),
            SamplingRule::BetaEb { beta, improved: true } => write!(f, "{beta}-EB-ITCB"),
        }
    }
}

/// Accepts `at2`, `iat2`, `eb-tcb:<beta>` and `eb-itcb:<beta>` (case-insensitive),
/// each optionally followed by `@<alpha>`.
impl FromStr for Policy {
    type Err = BaiError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (body, alpha) = match s.split_once('@') {
            Some((body, alpha)) => (body, parse_real(alpha, "alpha")?),
            None => (s.as_str(), DEFAULT_ALPHA),
        };
        let policy = match body.split_once(':') {
            None if body == "at2" => Policy::at2(),
            None if body == "iat2" => Policy::iat2(),
            Some(("eb-tcb", beta)) => Policy::beta_eb(parse_real(beta, "beta")?, false),
            Some(("eb-itcb", beta)) => Policy::beta_eb(parse_real(beta, "beta")?, true),
            _ => return Err(BaiError::Config(format!("unknown policy `{s}`"))),
        }
        .with_alpha(alpha);
        policy.validate()?;
        Ok(policy)
    }
}

fn parse_real(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| BaiError::Config(format!("invalid {what} `{s}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStyle {
    /// `ln((1 + ln N) / delta)`
    #[default]
    Gk16,
    /// `ln((K-1)/delta) + 6 ln(ln(N/2) + 1) + 8 ln(1 + 2 ln((K-1)/delta))`
    Kk21,
}

impl FromStr for ThresholdStyle {
    type Err = BaiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gk16" => Ok(ThresholdStyle::Gk16),
            "kk21" => Ok(ThresholdStyle::Kk21),
            other => Err(BaiError::Config(format!("unknown threshold `{other}` (expected gk16 or kk21)"))),
        }
    }
}

impl fmt::Display for ThresholdStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdStyle::Gk16 => "gk16",
            ThresholdStyle::Kk21 => "kk21",
        })
    }
}

pub fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(BaiError::Config(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// Stopping threshold `beta(N, delta)` for a `num_arms`-armed problem.
pub fn threshold(style: ThresholdStyle, num_arms: usize, n: u64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 {
        return Err(BaiError::Config("threshold needs N >= 1".into()));
    }
    Ok(threshold_raw(style, num_arms, n as f64, delta))
}

fn threshold_raw(style: ThresholdStyle, num_arms: usize, n: f64, delta: f64) -> f64 {
    match style {
        ThresholdStyle::Gk16 => ((1.0 + n.ln()) / delta).ln(),
        ThresholdStyle::Kk21 => {
            let base = ((num_arms as f64 - 1.0) / delta).ln();
            base + 6.0 * ((n / 2.0).ln() + 1.0).ln() + 8.0 * (1.0 + 2.0 * base).ln()
        }
    }
}

/// Arm to pull next given the state after `N - 1` pulls.
///
/// `coin` is a uniform draw on `[0, 1)` and is required by the beta-EB rules
/// once forced exploration is over.
pub fn choose_arm(family: SpefFamily, state: &SamplingState, policy: &Policy, coin: Option<f64>) -> Result<usize> {
    policy.validate()?;
    if let Some(arm) = forced_arm(state, policy.alpha) {
        return Ok(arm);
    }
    let means = state.means().ok_or_else(|| BaiError::Degenerate("unpulled arm after exploration".into()))?;
    for &m in &means {
        family.check_closure(m)?;
    }
    let report = report_raw(family, &means, &state.counts_f64());
    top_two_arm(state, policy, &report, || coin.ok_or(BaiError::MissingCoin))
}

/// Least-pulled arm when some arm has fewer than `N^alpha` pulls, where
/// `N = total + 1` is the iteration about to be played.
fn forced_arm(state: &SamplingState, alpha: f64) -> Option<usize> {
    let floor = ((state.total() + 1) as f64).powf(alpha);
    let counts = state.counts();
    let mut arm = 0;
    for (a, &c) in counts.iter().enumerate().skip(1) {
        if c < counts[arm] {
            arm = a;
        }
    }
    ((counts[arm] as f64) < floor).then_some(arm)
}

fn top_two_arm<C>(state: &SamplingState, policy: &Policy, report: &IndexReport, coin: C) -> Result<usize>
where
    C: FnOnce() -> Result<f64>,
{
    let lead = match policy.rule {
        SamplingRule::At2 | SamplingRule::Iat2 => report.anchor_value > 0.0,
        SamplingRule::BetaEb { beta, .. } => coin()? < beta,
    };
    if lead {
        return Ok(report.best_arm);
    }
    Ok(challenger(state, report, policy.improved_challenger()))
}

/// Smallest (optionally `ln N_a`-penalized) index, lowest id on ties.
fn challenger(state: &SamplingState, report: &IndexReport, improved: bool) -> usize {
    let counts = state.counts();
    let mut arm = usize::MAX;
    let mut value = f64::INFINITY;
    for &(a, index) in &report.indexes {
        let v = if improved { index + (counts[a] as f64).ln() } else { index };
        if v < value || arm == usize::MAX {
            value = v;
            arm = a;
        }
    }
    arm
}

/// Per-iteration diagnostics recorded along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: u64,
    /// Empirical anchor value.
    pub anchor: f64,
    /// Empirical index of every challenger of the true best arm divided by `N`,
    /// in arm-id order.
    pub normalized_indexes: Vec<f64>,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub tau: u64,
    pub recommended: usize,
    pub correct: bool,
    pub final_counts: Vec<u64>,
    pub hit_cap: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Stopping configuration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub delta: f64,
    pub threshold: ThresholdStyle,
}

/// What to record while a run progresses.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Capture {
    /// Record a trajectory point every `stride` iterations (once all arms are pulled).
    pub stride: Option<u64>,
    /// Keep every `(arm, reward)` pair.
    pub pull_log: bool,
}

/// Full record of a run, including optional diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub outcome: RunOutcome,
    pub state: SamplingState,
    pub pulls: Vec<(usize, f64)>,
}

/// Runs `policy` until the GLLR statistic crosses the threshold or `cap` pulls.
pub fn run_until_stop(
    instance: &BanditInstance,
    policy: &Policy,
    delta: f64,
    style: ThresholdStyle,
    stream: Substream,
    cap: u64,
) -> Result<RunOutcome> {
    let rule = StoppingRule { delta, threshold: style };
    Ok(simulate(instance, policy, Some(rule), stream, cap, Capture::default())?.outcome)
}

/// Core run loop shared by stopped runs and fixed-horizon diagnostics.
/// With `stopping = None` the run lasts exactly `cap` pulls.
pub fn simulate(
    instance: &BanditInstance,
    policy: &Policy,
    stopping: Option<StoppingRule>,
    stream: Substream,
    cap: u64,
    capture: Capture,
) -> Result<RunRecord> {
    policy.validate()?;
    let k = instance.num_arms();
    if cap < k as u64 {
        return Err(BaiError::Config(format!("cap {cap} must be at least the number of arms {k}")));
    }
    if let Some(rule) = stopping {
        check_delta(rule.delta)?;
    }
    if capture.stride == Some(0) {
        return Err(BaiError::Config("trajectory stride must be positive".into()));
    }
    let family = instance.family();
    let mu = instance.means();
    let true_best = instance.best_arm();
    let mut rewards = stream.sibling(StreamRole::Rewards).rng();
    let mut coins = stream.sibling(StreamRole::Coins).rng();

    let mut state = SamplingState::new(k);
    let mut report: Option<IndexReport> = None;
    let mut unpulled = k;
    let mut pulls = Vec::new();
    let mut trajectory = capture.stride.map(|_| Vec::new());
    let mut stopped = false;

    for n in 1..=cap {
        let arm = match forced_arm(&state, policy.alpha) {
            Some(arm) => arm,
            None => {
                let report = report.as_ref().ok_or_else(|| BaiError::Degenerate("missing report".into()))?;
                top_two_arm(&state, policy, report, || Ok(coins.random::<f64>()))?
            }
        };
        let reward = family.sample_raw(mu[arm], &mut rewards);
        if state.counts()[arm] == 0 {
            unpulled -= 1;
        }
        state.record(arm, reward);
        if capture.pull_log {
            pulls.push((arm, reward));
        }
        if unpulled > 0 {
            continue;
        }
        let counts = state.counts_f64();
        let means: Vec<f64> = (0..k).map(|a| state.reward_sums()[a] / counts[a]).collect();
        let current = report_raw(family, &means, &counts);
        if let (Some(traj), Some(stride)) = (trajectory.as_mut(), capture.stride) {
            if n % stride == 0 {
                traj.push(trajectory_point(family, n, &means, &counts, true_best, &current));
            }
        }
        if let Some(rule) = stopping {
            if current.min_index > threshold_raw(rule.threshold, k, n as f64, rule.delta) {
                report = Some(current);
                stopped = true;
                break;
            }
        }
        report = Some(current);
    }

    let recommended = match &report {
        Some(r) => r.best_arm,
        None => crate::spef::argmax(&state.counts_f64()),
    };
    let outcome = RunOutcome {
        tau: state.total(),
        recommended,
        correct: recommended == true_best,
        final_counts: state.counts().to_vec(),
        hit_cap: stopping.is_some() && !stopped,
        trajectory,
    };
    Ok(RunRecord { outcome, state, pulls })
}

fn trajectory_point(
    family: SpefFamily,
    n: u64,
    means: &[f64],
    counts: &[f64],
    true_best: usize,
    report: &IndexReport,
) -> TrajectoryPoint {
    let total = n as f64;
    let normalized_indexes = (0..means.len())
        .filter(|&a| a != true_best)
        .map(|a| index_raw(family, counts[true_best], counts[a], means[true_best], means[a]) / total)
        .collect();
    TrajectoryPoint {
        n,
        anchor: report.anchor_value,
        normalized_indexes,
        proportions: counts.iter().map(|c| c / total).collect(),
    }
}

/// Fraction of outcomes that recommend a wrong arm.
pub fn error_rate(outcomes: &[RunOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| !o.correct).count() as f64 / outcomes.len() as f64
}

/// Empirical misidentification rate over `runs` independent runs.
pub fn delta_correctness_estimate(
    instance: &BanditInstance,
    policy: &Policy,
    delta: f64,
    style: ThresholdStyle,
    runs: u64,
    master_seed: u64,
    cap: u64,
) -> Result<f64> {
    if runs < 100 {
        return Err(BaiError::Config(format!("need at least 100 runs, got {runs}")));
    }
    let outcomes: Vec<RunOutcome> = (0..runs)
        .into_par_iter()
        .map(|run| run_until_stop(instance, policy, delta, style, Substream::new(master_seed, run, StreamRole::Rewards), cap))
        .collect::<Result<_>>()?;
    Ok(error_rate(&outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const G: SpefFamily = SpefFamily::Gaussian { sigma: 1.0 };

    fn stream(run: u64) -> Substream {
        Substream::new(11, run, StreamRole::Rewards)
    }

    #[test]
    fn policy_parsing_and_names() {
        assert_eq!("AT2".parse::<Policy>().unwrap(), Policy::at2());
        assert_eq!("eb-itcb:0.5".parse::<Policy>().unwrap(), Policy::beta_eb(0.5, true));
        assert_eq!("iat2@0.3".parse::<Policy>().unwrap(), Policy::iat2().with_alpha(0.3));
        assert_eq!(Policy::beta_eb(0.5, false).to_string(), "0.5-EB-TCB");
        assert_eq!(Policy::beta_eb(0.5, true).to_string(), "0.5-EB-ITCB");
        assert!("eb-tcb:1.5".parse::<Policy>().is_err());
        assert!("at2@1".parse::<Policy>().is_err());
        assert!("ucb".parse::<Policy>().is_err());
    }

    #[test]
    fn threshold_values() {
        let gk = ThresholdStyle::Gk16;
        assert_relative_eq!(threshold(gk, 4, 1, 0.1).unwrap(), 10f64.ln(), max_relative = 1e-15);
        // N = e needs a real argument
        assert_relative_eq!(threshold_raw(gk, 4, std::f64::consts::E, 0.001), 7.600902459542082, max_relative = 1e-14);
        let kk = threshold(ThresholdStyle::Kk21, 2, 2, 0.1).unwrap();
        assert_relative_eq!(kk, 16.092_100_447_459_21, max_relative = 1e-14);
        assert!(threshold(gk, 2, 5, 0.0).is_err());
        assert!(threshold(gk, 2, 5, 1.0).is_err());
    }

    #[test]
    fn forced_exploration_cases() {
        let p = Policy::at2();
        let state = SamplingState::new(3);
        assert_eq!(choose_arm(G, &state, &p, None).unwrap(), 0);
        // N = 7: arm 1 has one pull, below 7^0.5
        let state = SamplingState::from_parts(vec![5, 1], vec![5.0, 0.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &p, None).unwrap(), 1);
    }

    #[test]
    fn anchor_sign_drives_the_choice() {
        // N = 19, floor 19^0.5 < 9: g = (9/9)^2 - 1 = 0 -> challenger
        let state = SamplingState::from_parts(vec![9, 9], vec![9.0, 0.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &Policy::at2(), None).unwrap(), 1);
        // g = 1/4 + 1/4 - 1 < 0 with the smaller index on arm 2
        let state = SamplingState::from_parts(vec![20, 10, 10], vec![20.0, 5.0, 8.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &Policy::at2(), None).unwrap(), 2);
        // g = 1 + 1 - 1 > 0 -> leader
        let state = SamplingState::from_parts(vec![10, 10, 10], vec![10.0, 5.0, 8.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &Policy::at2(), None).unwrap(), 0);
    }

    #[test]
    fn iat2_penalizes_heavily_sampled_challengers() {
        // indexes: arm 1: 40*10/50*0.5*0.25 = 1.0 (ln 10 = 2.30), arm 2: 40*20/60*0.5*0.16 = 1.067 (ln 20 = 3.0)
        let state = SamplingState::from_parts(vec![40, 10, 20], vec![40.0, 5.0, 12.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &Policy::at2(), None).unwrap(), 1);
        // arm 1: 40*30/70*0.02 = 0.34 (+ ln 30 = 3.74); arm 2: 40*10/50*0.08 = 0.64 (+ ln 10 = 2.94)
        let state = SamplingState::from_parts(vec![40, 30, 10], vec![40.0, 24.0, 6.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &Policy::at2(), None).unwrap(), 1);
        assert_eq!(choose_arm(G, &state, &Policy::iat2(), None).unwrap(), 2);
    }

    #[test]
    fn beta_eb_requires_a_coin() {
        let p = Policy::beta_eb(0.5, false);
        let state = SamplingState::from_parts(vec![9, 9], vec![9.0, 0.0]).unwrap();
        assert_eq!(choose_arm(G, &state, &p, None), Err(BaiError::MissingCoin));
        assert_eq!(choose_arm(G, &state, &p, Some(0.2)).unwrap(), 0);
        assert_eq!(choose_arm(G, &state, &p, Some(0.7)).unwrap(), 1);
        // coins are not needed during forced exploration
        assert_eq!(choose_arm(G, &SamplingState::new(2), &p, None).unwrap(), 0);
    }

    #[test]
    fn well_separated_run_stops_correctly() {
        let inst = BanditInstance::gaussian(vec![10.0, 0.0]).unwrap();
        let out = run_until_stop(&inst, &Policy::at2(), 0.1, ThresholdStyle::Gk16, stream(0), 1000).unwrap();
        assert!(out.tau >= 2);
        assert_eq!(out.recommended, 0);
        assert!(out.correct && !out.hit_cap);
        assert_eq!(out.tau, out.final_counts.iter().sum::<u64>());
    }

    #[test]
    fn runs_are_deterministic() {
        let inst = BanditInstance::gaussian(vec![1.0, 0.8, 0.5]).unwrap();
        for p in [Policy::at2(), Policy::beta_eb(0.5, true)] {
            let a = run_until_stop(&inst, &p, 0.05, ThresholdStyle::Gk16, stream(3), 100_000).unwrap();
            let b = run_until_stop(&inst, &p, 0.05, ThresholdStyle::Gk16, stream(3), 100_000).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cap_is_flagged() {
        let inst = BanditInstance::gaussian(vec![1.0, 0.99]).unwrap();
        let out = run_until_stop(&inst, &Policy::at2(), 1e-6, ThresholdStyle::Gk16, stream(1), 50).unwrap();
        assert!(out.hit_cap);
        assert_eq!(out.tau, 50);
        assert!(run_until_stop(&inst, &Policy::at2(), 0.1, ThresholdStyle::Gk16, stream(1), 1).is_err());
    }

    #[test]
    fn error_rate_counts_flags() {
        let mk = |correct| RunOutcome {
            tau: 10,
            recommended: 0,
            correct,
            final_counts: vec![5, 5],
            hit_cap: false,
            trajectory: None,
        };
        let outcomes = vec![mk(true), mk(false), mk(true), mk(true)];
        assert_eq!(error_rate(&outcomes), 0.25);
        assert_eq!(error_rate(&[]), 0.0);
    }

    #[test]
    fn huge_gap_never_errs() {
        let inst = BanditInstance::gaussian(vec![50.0, 0.0, 1.0]).unwrap();
        let rate = delta_correctness_estimate(&inst, &Policy::iat2(), 0.1, ThresholdStyle::Gk16, 200, 4, 10_000).unwrap();
        assert_eq!(rate, 0.0);
        assert!(delta_correctness_estimate(&inst, &Policy::iat2(), 0.1, ThresholdStyle::Gk16, 50, 4, 10_000).is_err());
    }
}
