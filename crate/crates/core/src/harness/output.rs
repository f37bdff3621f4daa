//! CSV and JSON renderings. Every CSV begins with a `# config:` line holding
//! the resolved configuration as JSON; headers are fixed per table.
//!
//! * summary: `policy,runs,mean_tau,stderr,error_rate,cap_hits`
//! * per run: `policy,run,tau,recommended,correct,hit_cap`
//! * diag: `policy,n,anchor_mean,anchor_sd,anchor_abs_mean`, then
//!   `H<a>_mean,H<a>_sd` per challenger, `p<a>_mean,p<a>_sd` per arm,
//!   `index_spread` and, when an optimum was supplied, `proportion_error`
//!   (series left out of the configuration are omitted)
//! * fluid: `N,N<a>...,g,I_B,regime`
//!
//! Wall-clock times only appear in the JSON summary, so CSV output is
//! byte-identical across repeated runs.

use std::fmt::Write as _;

use serde::Serialize;

use super::bench::{BenchReport, BenchSummary};
use super::config::{ExperimentConfig, Series};
use super::diag::PolicyDiag;
use crate::fluid::{FluidEvent, FluidTrajectory};

pub const SUMMARY_HEADER: &str = "policy,runs,mean_tau,stderr,error_rate,cap_hits";
pub const RUNS_HEADER: &str = "policy,run,tau,recommended,correct,hit_cap";

fn config_line(config: &impl Serialize) -> String {
    format!("# config: {}\n", serde_json::to_string(config).expect("config serializes"))
}

pub fn summary_csv(config: &ExperimentConfig, summary: &BenchSummary) -> String {
    let mut s = config_line(config);
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for r in &summary.rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.policy, r.runs, r.mean_tau, r.stderr, r.error_rate, r.cap_hits);
    }
    s
}

pub fn runs_csv(config: &ExperimentConfig, report: &BenchReport) -> String {
    let mut s = config_line(config);
    s.push_str(RUNS_HEADER);
    s.push('\n');
    for (row, outcomes) in report.summary.rows.iter().zip(&report.outcomes) {
        for (run, o) in outcomes.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{},{},{}", row.policy, run, o.tau, o.recommended, o.correct, o.hit_cap);
        }
    }
    s
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    config: &'a ExperimentConfig,
    summary: &'a BenchSummary,
}

pub fn summary_json(config: &ExperimentConfig, summary: &BenchSummary) -> String {
    serde_json::to_string_pretty(&SummaryJson { config, summary }).expect("summary serializes")
}

pub fn diag_header(config: &ExperimentConfig, with_error: bool) -> String {
    let inst = &config.instance;
    let mut cols = vec!["policy".to_string(), "n".into()];
    if config.capture.wants(Series::Anchor) {
        cols.extend(["anchor_mean".into(), "anchor_sd".into(), "anchor_abs_mean".into()]);
    }
    if config.capture.wants(Series::Indexes) {
        for a in inst.challengers() {
            cols.push(format!("H{a}_mean"));
            cols.push(format!("H{a}_sd"));
        }
    }
    if config.capture.wants(Series::Proportions) {
        for a in 0..inst.num_arms() {
            cols.push(format!("p{a}_mean"));
            cols.push(format!("p{a}_sd"));
        }
    }
    cols.push("index_spread".into());
    if with_error {
        cols.push("proportion_error".into());
    }
    cols.join(",")
}

pub fn diag_csv(config: &ExperimentConfig, diags: &[PolicyDiag]) -> String {
    let with_error = diags.iter().flat_map(|d| &d.points).any(|p| p.proportion_error.is_some());
    let mut s = config_line(config);
    s.push_str(&diag_header(config, with_error));
    s.push('\n');
    for d in diags {
        for p in &d.points {
            let mut row = vec![d.policy.clone(), p.n.to_string()];
            if config.capture.wants(Series::Anchor) {
                row.extend([p.anchor.mean.to_string(), p.anchor.sd.to_string(), p.anchor_abs.to_string()]);
            }
            if config.capture.wants(Series::Indexes) {
                for b in &p.indexes {
                    row.extend([b.mean.to_string(), b.sd.to_string()]);
                }
            }
            if config.capture.wants(Series::Proportions) {
                for b in &p.proportions {
                    row.extend([b.mean.to_string(), b.sd.to_string()]);
                }
            }
            row.push(p.index_spread.to_string());
            if with_error {
                row.push(p.proportion_error.map(|e| e.to_string()).unwrap_or_default());
            }
            s.push_str(&row.join(","));
            s.push('\n');
        }
    }
    s
}

pub fn fluid_header(num_arms: usize) -> String {
    let mut cols = vec!["N".to_string()];
    cols.extend((0..num_arms).map(|a| format!("N{a}")));
    cols.extend(["g".into(), "I_B".into(), "regime".into()]);
    cols.join(",")
}

pub fn fluid_csv(header: &impl Serialize, traj: &FluidTrajectory) -> String {
    let k = traj.samples.first().map(|s| s.allocations.len()).unwrap_or(0);
    let mut s = config_line(header);
    s.push_str(&fluid_header(k));
    s.push('\n');
    for st in &traj.samples {
        let _ = write!(s, "{}", st.total);
        for n in &st.allocations {
            let _ = write!(s, ",{n}");
        }
        let _ = writeln!(s, ",{},{},{}", st.anchor, st.common_index, st.regime.label());
    }
    s
}

#[derive(Serialize)]
struct EventsJson<'a> {
    stability_time: Option<f64>,
    events: &'a [FluidEvent],
}

pub fn fluid_events_json(traj: &FluidTrajectory) -> String {
    serde_json::to_string_pretty(&EventsJson { stability_time: traj.stability_time, events: &traj.events })
        .expect("events serialize")
}
