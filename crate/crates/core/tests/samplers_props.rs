#![allow(clippy::needless_range_loop)]

use bai_core::anchor_index::{anchor, empirical_report, index_value};
use bai_core::harness::{diag_capture_with_threads, ExperimentConfig};
use bai_core::oracle::{solve_optimal, DEFAULT_TOL};
use bai_core::rng::{StreamRole, Substream};
use bai_core::samplers::{run_until_stop, simulate, threshold, Capture, Policy, StoppingRule, ThresholdStyle};
use bai_core::spef::BanditInstance;
use proptest::prelude::*;

fn stream(seed: u64, run: u64) -> Substream {
    Substream::new(seed, run, StreamRole::Rewards)
}

fn spread_four_arm() -> BanditInstance {
    BanditInstance::gaussian(vec![10.0, 8.0, 7.0, 6.5]).unwrap()
}

#[test]
fn forced_exploration_deficit_is_bounded() {
    let inst = spread_four_arm();
    let capture = Capture { stride: None, pull_log: true };
    for policy in [Policy::at2(), Policy::iat2(), Policy::beta_eb(0.5, false)] {
        let mut early = 0.0f64;
        let mut late = 0.0f64;
        for run in 0..100 {
            let rec = simulate(&inst, &policy, None, stream(3, run), 5000, capture).unwrap();
            let mut counts = [0u64; 4];
            for (n, &(arm, _)) in rec.pulls.iter().enumerate() {
                counts[arm] += 1;
                let n = (n + 1) as f64;
                let deficit = n.powf(policy.alpha) - *counts.iter().min().unwrap() as f64;
                if n <= 1000.0 {
                    early = early.max(deficit);
                } else {
                    late = late.max(deficit);
                }
            }
        }
        assert!(early <= 4.0 && late <= 4.0, "{policy}: deficits {early} / {late}");
        assert!(late <= early + 1.0, "{policy}: deficit grows {early} -> {late}");
    }
}

#[test]
fn trajectory_replays_from_the_pull_log() {
    let inst = spread_four_arm();
    for policy in [Policy::at2(), Policy::beta_eb(0.5, true)] {
        let capture = Capture { stride: Some(1), pull_log: true };
        let rec = simulate(&inst, &policy, None, stream(8, 2), 100, capture).unwrap();
        let traj = rec.outcome.trajectory.unwrap();
        let f = inst.family();
        let mut counts = [0.0f64; 4];
        let mut sums = [0.0f64; 4];
        let mut it = traj.iter();
        for (n, &(arm, r)) in rec.pulls.iter().enumerate() {
            counts[arm] += 1.0;
            sums[arm] += r;
            if counts.contains(&0.0) {
                continue;
            }
            let p = it.next().unwrap();
            assert_eq!(p.n, n as u64 + 1);
            let means: Vec<f64> = (0..4).map(|a| sums[a] / counts[a]).collect();
            let best = (0..4).fold(0, |b, a| if means[a] > means[b] { a } else { b });
            let g = anchor(f, &means, &counts, best).unwrap();
            assert!((p.anchor - g).abs() <= 1e-12 * g.abs().max(1.0));
            let total = (n + 1) as f64;
            for (j, a) in (1..4).enumerate() {
                let h = index_value(f, counts[0], counts[a], means[0], means[a]).unwrap() / total;
                assert!((p.normalized_indexes[j] - h).abs() <= 1e-12 * h.max(1.0));
            }
            for a in 0..4 {
                assert_eq!(p.proportions[a], counts[a] / total);
            }
        }
        assert!(it.next().is_none());
        // the pull log alone reproduces the run
        let again = simulate(&inst, &policy, None, stream(8, 2), 100, capture).unwrap();
        assert_eq!(again.pulls, rec.pulls);
    }
}

fn capture_config(policies: Vec<Policy>, runs: u64, horizon: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(spread_four_arm(), policies);
    c.runs = runs;
    c.master_seed = 17;
    c.capture.horizon = horizon;
    c.capture.stride = 10;
    c
}

#[test]
fn empirical_trends_toward_the_optimum() {
    let omega = solve_optimal(&spread_four_arm(), DEFAULT_TOL).unwrap().omega;
    let config = capture_config(vec![Policy::at2(), Policy::iat2()], 200, 4000);
    let diags = diag_capture_with_threads(&config, Some(&omega), None).unwrap();
    for d in &diags {
        let (early, late) = (d.at(500).unwrap(), d.at(4000).unwrap());
        assert!(late.proportion_error.unwrap() < early.proportion_error.unwrap(), "{}: proportions", d.policy);
        assert!(late.index_spread < early.index_spread, "{}: index spread", d.policy);
    }
    // anchor tracking under AT2: the windowed mean of |g| shrinks
    let config = capture_config(vec![Policy::at2()], 200, 4000);
    let at2 = &diag_capture_with_threads(&config, None, None).unwrap()[0];
    let windows: Vec<f64> = [250u64, 500, 1000, 2000].iter().map(|&n0| at2.mean_abs_anchor_over(n0, 2 * n0)).collect();
    assert!(windows.windows(2).all(|w| w[1] < w[0]), "{windows:?}");
    assert!(at2.at(4000).unwrap().index_spread < at2.at(500).unwrap().index_spread);
}

#[test]
fn six_arm_lower_bound_sits_below_the_measured_mean() {
    let inst = BanditInstance::gaussian(vec![10.0, 9.4, 7.0, 6.5, 6.0, 5.5]).unwrap();
    let t_star = solve_optimal(&inst, DEFAULT_TOL).unwrap().t_star;
    let delta = 0.001;
    let runs = 1000;
    let mean = (0..runs)
        .map(|r| run_until_stop(&inst, &Policy::at2(), delta, ThresholdStyle::Gk16, stream(1, r), 10_000_000).unwrap().tau as f64)
        .sum::<f64>()
        / runs as f64;
    assert!(t_star * (1.0 / delta).ln() < mean, "T* log(1/delta) = {} vs mean {mean}", t_star * (1.0 / delta).ln());
}

#[test]
fn stopped_runs_never_stop_on_a_zero_index() {
    // tied challengers make zero empirical gaps plausible early on
    let inst = BanditInstance::gaussian(vec![0.1, 0.0, 0.0]).unwrap();
    let rule = StoppingRule { delta: 0.5, threshold: ThresholdStyle::Gk16 };
    let mut stopped = 0;
    for run in 0..200 {
        let rec = simulate(&inst, &Policy::at2(), Some(rule), stream(4, run), 200_000, Capture::default()).unwrap();
        if !rec.outcome.hit_cap {
            stopped += 1;
            let report = empirical_report(inst.family(), &rec.state).unwrap();
            assert!(report.min_index > 0.0);
            assert!(report.min_index > threshold(ThresholdStyle::Gk16, 3, rec.outcome.tau, 0.5).unwrap());
        }
    }
    assert!(stopped > 150);
}

proptest! {
    #[test]
    fn thresholds_are_positive(k in 2usize..20, n in 1u64..10_000_000, delta in 1e-12..0.999f64) {
        prop_assert!(threshold(ThresholdStyle::Gk16, k, n, delta).unwrap() > 0.0);
        prop_assert!(threshold(ThresholdStyle::Kk21, k, n.max(2), delta).unwrap() > 0.0);
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), run in 0u64..1000) {
        let inst = BanditInstance::gaussian(vec![1.0, 0.5, 0.0]).unwrap();
        let p = Policy::beta_eb(0.5, false);
        let a = run_until_stop(&inst, &p, 0.1, ThresholdStyle::Gk16, stream(seed, run), 1_000_000).unwrap();
        let b = run_until_stop(&inst, &p, 0.1, ThresholdStyle::Gk16, stream(seed, run), 1_000_000).unwrap();
        prop_assert_eq!(a, b);
    }
}
