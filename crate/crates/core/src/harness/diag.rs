//! Fixed-horizon trajectory capture averaged across runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bench::{in_pool, threads_from_env};
use super::config::ExperimentConfig;
use crate::error::Result;
use crate::rng::{StreamRole, Substream};
use crate::samplers::{simulate, Capture, TrajectoryPoint};

/// Runs folded together between two parallel batches.
const CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub sd: f64,
}

impl Band {
    pub fn lower(&self) -> f64 {
        self.mean - 2.0 * self.sd
    }

    pub fn upper(&self) -> f64 {
        self.mean + 2.0 * self.sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagPoint {
    pub n: u64,
    pub anchor: Band,
    /// Mean over runs of `|g|`.
    pub anchor_abs: f64,
    /// Normalized indexes `H_a = I_a / N` of the challengers, in arm-id order.
    pub indexes: Vec<Band>,
    pub proportions: Vec<Band>,
    /// Mean over runs of `max_a H_a - min_a H_a`.
    pub index_spread: f64,
    /// Mean over runs of `max_a |N_a / N - omega_a|`, when an optimum is supplied.
    pub proportion_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDiag {
    pub policy: String,
    pub runs: u64,
    pub points: Vec<DiagPoint>,
}

#[derive(Debug, Clone, Default)]
struct Moments {
    s: f64,
    ss: f64,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.s += x;
        self.ss += x * x;
    }

    fn band(&self, n: f64) -> Band {
        let mean = self.s / n;
        let var = if n > 1.0 { ((self.ss - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Band { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    n: u64,
    anchor: Moments,
    anchor_abs: f64,
    indexes: Vec<Moments>,
    proportions: Vec<Moments>,
    spread: f64,
    error: f64,
}

/// Captures strided trajectories with the stopping rule disabled and folds
/// them into per-`N` means and standard deviations. `omega` enables the
/// proportion-error column.
pub fn diag_capture(config: &ExperimentConfig, omega: Option<&[f64]>) -> Result<Vec<PolicyDiag>> {
    diag_capture_with_threads(config, omega, threads_from_env()?)
}

pub fn diag_capture_with_threads(
    config: &ExperimentConfig,
    omega: Option<&[f64]>,
    threads: Option<usize>,
) -> Result<Vec<PolicyDiag>> {
    config.validate()?;
    let k = config.instance.num_arms();
    let horizon = config.capture.horizon;
    let stride = config.capture.stride;
    let capture = Capture { stride: Some(stride), pull_log: false };
    let mut out = Vec::new();
    for policy in &config.policies {
        let mut acc: Option<Vec<Accumulator>> = None;
        let mut start = 0;
        while start < config.runs {
            let end = (start + CHUNK).min(config.runs);
            let batch: Vec<Vec<TrajectoryPoint>> = in_pool(threads, || {
                (start..end)
                    .into_par_iter()
                    .map(|run| {
                        let stream = Substream::new(config.master_seed, run, StreamRole::Rewards);
                        let rec = simulate(&config.instance, policy, None, stream, horizon, capture)?;
                        Ok(rec.outcome.trajectory.unwrap_or_default())
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            for traj in batch {
                let acc = acc.get_or_insert_with(|| {
                    traj.iter()
                        .map(|p| Accumulator {
                            n: p.n,
                            anchor: Moments::default(),
                            anchor_abs: 0.0,
                            indexes: vec![Moments::default(); k - 1],
                            proportions: vec![Moments::default(); k],
                            spread: 0.0,
                            error: 0.0,
                        })
                        .collect()
                });
                for (a, p) in acc.iter_mut().zip(&traj) {
                    debug_assert_eq!(a.n, p.n);
                    a.anchor.add(p.anchor);
                    a.anchor_abs += p.anchor.abs();
                    for (m, &h) in a.indexes.iter_mut().zip(&p.normalized_indexes) {
                        m.add(h);
                    }
                    for (m, &w) in a.proportions.iter_mut().zip(&p.proportions) {
                        m.add(w);
                    }
                    let hi = p.normalized_indexes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lo = p.normalized_indexes.iter().cloned().fold(f64::INFINITY, f64::min);
                    a.spread += hi - lo;
                    if let Some(w) = omega {
                        a.error += p.proportions.iter().zip(w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    }
                }
            }
            start = end;
        }
        let runs = config.runs as f64;
        let points = acc
            .unwrap_or_default()
            .into_iter()
            .map(|a| DiagPoint {
                n: a.n,
                anchor: a.anchor.band(runs),
                anchor_abs: a.anchor_abs / runs,
                indexes: a.indexes.iter().map(|m| m.band(runs)).collect(),
                proportions: a.proportions.iter().map(|m| m.band(runs)).collect(),
                index_spread: a.spread / runs,
                proportion_error: omega.map(|_| a.error / runs),
            })
            .collect();
        out.push(PolicyDiag { policy: policy.to_string(), runs: config.runs, points });
    }
    Ok(out)
}

impl PolicyDiag {
    /// The captured point closest to `n` from below.
    pub fn at(&self, n: u64) -> Option<&DiagPoint> {
        self.points.iter().take_while(|p| p.n <= n).last()
    }

    /// Run-averaged `|g|`, averaged again over the captured points in `[lo, hi]`.
    pub fn mean_abs_anchor_over(&self, lo: u64, hi: u64) -> f64 {
        let pts: Vec<&DiagPoint> = self.points.iter().filter(|p| p.n >= lo && p.n <= hi).collect();
        pts.iter().map(|p| p.anchor_abs).sum::<f64>() / pts.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_direct_formula() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 4.0] {
            m.add(x);
        }
        let b = m.band(3.0);
        assert!((b.mean - 7.0 / 3.0).abs() < 1e-15);
        let var = ((1.0f64 - 7.0 / 3.0).powi(2) + (2.0f64 - 7.0 / 3.0).powi(2) + (4.0f64 - 7.0 / 3.0).powi(2)) / 2.0;
        assert!((b.sd - var.sqrt()).abs() < 1e-14);
        assert_eq!(b.lower(), b.mean - 2.0 * b.sd);
    }
}
