//! Parallel Monte Carlo replication of stopped runs.
//!
//! Run `r` of every policy draws from the substream `(master_seed, r)`, so
//! policies are compared on common random numbers. Runs are scheduled on a
//! rayon pool; aggregation walks outcomes in run-id order, so the summary does
//! not depend on the number of workers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{BaiError, Result};
use crate::rng::{StreamRole, Substream};
use crate::samplers::{run_until_stop, RunOutcome};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "BAI_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: u64,
    pub mean_tau: f64,
    /// Sample standard deviation over `sqrt(runs)`.
    pub stderr: f64,
    pub error_rate: f64,
    pub cap_hits: u64,
    /// Mean wall-clock time per run, in microseconds. Not reproducible.
    pub mean_wall_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub rows: Vec<PolicySummary>,
}

impl BenchSummary {
    pub fn row(&self, policy: &str) -> Option<&PolicySummary> {
        self.rows.iter().find(|r| r.policy == policy)
    }
}

/// Summary plus the per-run outcomes of each policy, in run-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub summary: BenchSummary,
    pub outcomes: Vec<Vec<RunOutcome>>,
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(BaiError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub(crate) fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BaiError::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// [`bench_with_threads`] with the worker count taken from the environment.
pub fn bench(config: &ExperimentConfig) -> Result<BenchReport> {
    bench_with_threads(config, threads_from_env()?)
}

pub fn bench_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<BenchReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.policies.len());
    let mut outcomes = Vec::with_capacity(config.policies.len());
    for policy in &config.policies {
        let timed: Vec<(RunOutcome, f64)> = in_pool(threads, || {
            (0..config.runs)
                .into_par_iter()
                .map(|run| {
                    let start = Instant::now();
                    let stream = Substream::new(config.master_seed, run, StreamRole::Rewards);
                    let out = run_until_stop(&config.instance, policy, config.delta, config.threshold, stream, config.cap)?;
                    Ok((out, start.elapsed().as_secs_f64() * 1e6))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let wall = timed.iter().map(|t| t.1).sum::<f64>() / timed.len() as f64;
        let runs: Vec<RunOutcome> = timed.into_iter().map(|t| t.0).collect();
        let mut row = summarize(&policy.to_string(), &runs);
        row.mean_wall_us = wall;
        rows.push(row);
        outcomes.push(runs);
    }
    Ok(BenchReport { summary: BenchSummary { rows }, outcomes })
}

/// Mean, standard error, error rate and cap hits of `outcomes`, summed in order.
pub fn summarize(policy: &str, outcomes: &[RunOutcome]) -> PolicySummary {
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.tau as f64).sum::<f64>() / n;
    let stderr = if outcomes.len() > 1 {
        let ss: f64 = outcomes.iter().map(|o| (o.tau as f64 - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    PolicySummary {
        policy: policy.to_string(),
        runs: outcomes.len() as u64,
        mean_tau: mean,
        stderr,
        error_rate: outcomes.iter().filter(|o| !o.correct).count() as f64 / n,
        cap_hits: outcomes.iter().filter(|o| o.hit_cap).count() as u64,
        mean_wall_us: 0.0,
    }
}
