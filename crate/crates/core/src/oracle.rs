//! Optimal allocation `omega*`, common index `I*` and characteristic time
//! `T* = 1 / I*`.
//!
//! The solver is three nested monotone root finds:
//!
//! * inner: for a fixed best-arm allocation `N1`, the challenger allocation
//!   `Na` that brings the pairwise index to its target (the index increases
//!   in `Na` towards `N1 d(mu1, mua)`);
//! * middle: the `N1` at which the ratio sum equals one (decreasing in `N1`
//!   above `max(N_{1,1}, N_{1,2})`);
//! * outer: the common index at which the total mass equals one (increasing).
//!
//! [`brute_force_tstar`] is an independent lattice search over the simplex
//! used to cross-check the solver.

use serde::{Deserialize, Serialize};

use crate::anchor_index::{anchor_raw, index_raw, ratio_raw};
use crate::error::{BaiError, Result};
use crate::root::{expand_upward, itp};
use crate::spef::{BanditInstance, SpefFamily};

/// Default residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Lower bracket end is nudged above `max(N_{1,1}, N_{1,2})` by this factor.
const BRACKET_NUDGE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalAllocation {
    pub omega: Vec<f64>,
    pub common_index: f64,
    pub t_star: f64,
    pub residual_ratio_sum: f64,
    pub residual_index_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedSolution {
    /// Full allocation vector; arms outside `B ∪ {best}` carry their fixed values.
    pub allocations: Vec<f64>,
    pub active: Vec<usize>,
    /// Largest target over the active set (the common index when targets are equal).
    pub common_index: f64,
    pub n_1_1: f64,
    pub n_1_2: f64,
    pub residual_ratio_sum: f64,
    pub residual_index: f64,
}

impl ConstrainedSolution {
    pub fn total(&self) -> f64 {
        self.allocations.iter().sum()
    }
}

/// Challenger allocation whose index against `n1` equals `target_index`.
pub fn solve_na_given_n1(family: SpefFamily, mu1: f64, mua: f64, n1: f64, target_index: f64) -> Result<f64> {
    family.check(mu1)?;
    family.check(mua)?;
    if !(n1 > 0.0 && n1.is_finite()) {
        return Err(BaiError::Degenerate(format!("best-arm allocation must be positive, got {n1}")));
    }
    if !(target_index >= 0.0 && target_index.is_finite()) {
        return Err(BaiError::Degenerate(format!("target index must be finite and >= 0, got {target_index}")));
    }
    na_given_n1_raw(family, mu1, mua, n1, target_index)
}

pub(crate) fn na_given_n1_raw(family: SpefFamily, mu1: f64, mua: f64, n1: f64, target: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let cap = n1 * family.kl_raw(mu1, mua);
    if cap <= target {
        return Err(BaiError::Infeasible(format!(
            "index target {target} is not below its supremum {cap} at N1 = {n1}"
        )));
    }
    // the index never exceeds na * d(mua, mu1)
    let lo = target / family.kl_raw(mua, mu1);
    let f = |na: f64| index_raw(family, n1, na, mu1, mua) - target;
    let f_lo = f(lo);
    if f_lo >= 0.0 {
        return Ok(lo);
    }
    let ftol = 1e-13 * target.max(1.0);
    let (a, fa, b, fb) = expand_upward(f, lo, f_lo, 2.0 * lo)?;
    let root = itp(f, a, b, fa, fb, 1e-16 * b, ftol)?;
    Ok(root.x)
}

fn validate_active(instance: &BanditInstance, active: &[usize]) -> Result<()> {
    if active.is_empty() {
        return Err(BaiError::Degenerate("active set must be non-empty".into()));
    }
    for (i, &a) in active.iter().enumerate() {
        if a >= instance.num_arms() || a == instance.best_arm() || active[..i].contains(&a) {
            return Err(BaiError::Degenerate(format!("invalid active arm {a}")));
        }
    }
    Ok(())
}

/// Best-arm allocation and active-arm allocations such that the ratio sum over
/// all challengers is one and every active arm reaches its target index.
///
/// `fixed` and `targets` are indexed by arm; only the entries of arms outside
/// `active ∪ {best}` of `fixed`, and of arms inside `active` of `targets`, are read.
pub fn solve_constrained(
    instance: &BanditInstance,
    active: &[usize],
    fixed: &[f64],
    targets: &[f64],
) -> Result<ConstrainedSolution> {
    validate_active(instance, active)?;
    let k = instance.num_arms();
    if fixed.len() != k || targets.len() != k {
        return Err(BaiError::Degenerate("fixed / targets must have one entry per arm".into()));
    }
    let best = instance.best_arm();
    let outside: Vec<usize> = instance.challengers().filter(|a| !active.contains(a)).collect();
    for &a in &outside {
        if !(fixed[a] >= 0.0 && fixed[a].is_finite()) {
            return Err(BaiError::Degenerate(format!("fixed allocation of arm {a} must be >= 0")));
        }
    }
    for &a in active {
        if !(targets[a] >= 0.0 && targets[a].is_finite()) {
            return Err(BaiError::Degenerate(format!("target of arm {a} must be >= 0")));
        }
    }
    let family = instance.family();
    let mu = instance.means();
    let mu1 = mu[best];

    let outside_ratio = |n1: f64| -> f64 {
        outside.iter().map(|&a| ratio_raw(family, n1, fixed[a], mu1, mu[a])).sum()
    };

    let outside_mass: f64 = outside.iter().map(|&a| fixed[a]).sum();
    let n_1_1 = if outside_mass == 0.0 {
        0.0
    } else {
        let f = |n1: f64| outside_ratio(n1) - 1.0;
        let start = outside_mass.max(f64::MIN_POSITIVE);
        let (a, fa, b, fb) = expand_upward(f, 0.0, f64::INFINITY, start)?;
        itp(f, a, b, fa, fb, 1e-16 * b, 0.0)?.x
    };
    let n_1_2 = active
        .iter()
        .map(|&a| targets[a] / family.kl_raw(mu1, mu[a]))
        .fold(0.0, f64::max);

    let lower = n_1_1.max(n_1_2);
    if lower == 0.0 {
        return Err(BaiError::Degenerate("all targets and outside allocations are zero".into()));
    }
    let lower = lower * (1.0 + BRACKET_NUDGE);

    let active_allocs = |n1: f64| -> Option<Vec<f64>> {
        active
            .iter()
            .map(|&a| na_given_n1_raw(family, mu1, mu[a], n1, targets[a]).ok())
            .collect()
    };
    let ratio_sum = |n1: f64| -> f64 {
        match active_allocs(n1) {
            None => f64::INFINITY,
            Some(na) => {
                let inside: f64 =
                    active.iter().zip(&na).map(|(&a, &n)| ratio_raw(family, n1, n, mu1, mu[a])).sum();
                inside + outside_ratio(n1) - 1.0
            }
        }
    };

    let f_lower = ratio_sum(lower);
    let n1 = if f_lower <= 0.0 {
        // rounding at the bracket edge; the root sits at the edge itself
        lower
    } else {
        let (a, fa, b, fb) = expand_upward(ratio_sum, lower, f_lower, 2.0 * lower)?;
        itp(ratio_sum, a, b, fa, fb, 1e-16 * b, 1e-14)?.x
    };

    let na = active_allocs(n1).ok_or_else(|| BaiError::NonConvergence {
        what: "active allocations infeasible at the solved N1".into(),
        residual: f64::INFINITY,
    })?;
    let mut allocations = vec![0.0; k];
    allocations[best] = n1;
    for &a in &outside {
        allocations[a] = fixed[a];
    }
    for (&a, &n) in active.iter().zip(&na) {
        allocations[a] = n;
    }
    let residual_ratio_sum = anchor_raw(family, mu, &allocations, best).abs();
    let residual_index = active
        .iter()
        .map(|&a| {
            (index_raw(family, n1, allocations[a], mu1, mu[a]) - targets[a]).abs() / targets[a].max(1.0)
        })
        .fold(0.0, f64::max);
    if !(residual_ratio_sum <= 1e-6) {
        return Err(BaiError::NonConvergence { what: "ratio sum at the solved N1".into(), residual: residual_ratio_sum });
    }
    let common_index = active.iter().map(|&a| targets[a]).fold(0.0, f64::max);
    Ok(ConstrainedSolution {
        allocations,
        active: active.to_vec(),
        common_index,
        n_1_1,
        n_1_2,
        residual_ratio_sum,
        residual_index,
    })
}

/// Constrained solution with every challenger active and a common target.
fn full_mass(instance: &BanditInstance, active: &[usize], index: f64) -> Result<ConstrainedSolution> {
    let k = instance.num_arms();
    let targets = vec![index; k];
    solve_constrained(instance, active, &vec![0.0; k], &targets)
}

/// Optimal proportions from the default outer bracket `[0, 1]`.
pub fn solve_optimal(instance: &BanditInstance, tol: f64) -> Result<OptimalAllocation> {
    solve_optimal_from(instance, tol, (0.0, 1.0))
}

/// Optimal proportions, starting the outer search from `bracket`. The bracket
/// is widened geometrically until it straddles the solution.
pub fn solve_optimal_from(instance: &BanditInstance, tol: f64, bracket: (f64, f64)) -> Result<OptimalAllocation> {
    if !(tol > 0.0) {
        return Err(BaiError::Degenerate(format!("tolerance must be positive, got {tol}")));
    }
    let active: Vec<usize> = instance.challengers().collect();
    let mut failure = None;
    let mut mass = |index: f64| -> f64 {
        if index <= 0.0 {
            return -1.0;
        }
        match full_mass(instance, &active, index) {
            Ok(sol) => sol.total() - 1.0,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    };
    let (mut lo, mut hi) = (bracket.0.max(0.0), bracket.1);
    if !(hi > lo) {
        hi = lo.max(1.0) * 2.0;
    }
    let mut f_lo = mass(lo);
    while f_lo > 0.0 {
        lo *= 0.5;
        f_lo = mass(lo);
    }
    let (a, fa, b, fb) = expand_upward(&mut mass, lo, f_lo, hi)?;
    let root = itp(&mut mass, a, b, fa, fb, 1e-17 * b, tol)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let sol = full_mass(instance, &active, root.x)?;
    let total = sol.total();
    if (total - 1.0).abs() > tol {
        return Err(BaiError::NonConvergence { what: "outer search on the common index".into(), residual: (total - 1.0).abs() });
    }
    let omega: Vec<f64> = sol.allocations.iter().map(|n| n / total).collect();
    Ok(summarize(instance, omega))
}

/// Builds an [`OptimalAllocation`] with residuals recomputed from `omega`.
fn summarize(instance: &BanditInstance, omega: Vec<f64>) -> OptimalAllocation {
    let family = instance.family();
    let mu = instance.means();
    let best = instance.best_arm();
    let indexes: Vec<f64> = instance
        .challengers()
        .map(|a| index_raw(family, omega[best], omega[a], mu[best], mu[a]))
        .collect();
    let max = indexes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = indexes.iter().cloned().fold(f64::INFINITY, f64::min);
    let common_index = indexes.iter().sum::<f64>() / indexes.len() as f64;
    OptimalAllocation {
        residual_ratio_sum: anchor_raw(family, mu, &omega, best).abs(),
        residual_index_spread: max - min,
        common_index,
        t_star: 1.0 / common_index,
        omega,
    }
}

/// Optimal proportions under the extra constraint `omega_best = beta`.
pub fn solve_beta_optimal(instance: &BanditInstance, beta: f64, tol: f64) -> Result<OptimalAllocation> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(BaiError::Degenerate(format!("beta must lie in (0, 1), got {beta}")));
    }
    let family = instance.family();
    let mu = instance.means();
    let best = instance.best_arm();
    let challengers: Vec<usize> = instance.challengers().collect();
    let sup = challengers.iter().map(|&a| beta * family.kl_raw(mu[best], mu[a])).fold(f64::INFINITY, f64::min);
    let mass = |index: f64| -> f64 {
        let mut total = 0.0;
        for &a in &challengers {
            match na_given_n1_raw(family, mu[best], mu[a], beta, index) {
                Ok(n) => total += n,
                Err(_) => return f64::INFINITY,
            }
        }
        total - (1.0 - beta)
    };
    let root = itp(mass, 0.0, sup, -(1.0 - beta), f64::INFINITY, 1e-17 * sup, tol)?;
    let mut omega = vec![0.0; instance.num_arms()];
    omega[best] = beta;
    for &a in &challengers {
        omega[a] = na_given_n1_raw(family, mu[best], mu[a], beta, root.x)?;
    }
    let total: f64 = omega.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(BaiError::NonConvergence { what: "beta-constrained common index".into(), residual: (total - 1.0).abs() });
    }
    let mut out = summarize(instance, omega);
    out.residual_ratio_sum = 0.0;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptimum {
    pub omega: Vec<f64>,
    pub min_index: f64,
    pub t_star: f64,
    pub points: u128,
}

/// Default cap on the number of lattice points visited.
pub const DEFAULT_LATTICE_BUDGET: u128 = 500_000_000;

/// Exhaustive search of `max_omega min_a W_a(omega)` over the simplex lattice
/// with spacing `1 / resolution`.
pub fn brute_force_tstar(instance: &BanditInstance, resolution: usize) -> Result<LatticeOptimum> {
    brute_force_tstar_with_budget(instance, resolution, DEFAULT_LATTICE_BUDGET)
}

pub fn brute_force_tstar_with_budget(
    instance: &BanditInstance,
    resolution: usize,
    budget: u128,
) -> Result<LatticeOptimum> {
    if resolution < 10 {
        return Err(BaiError::Degenerate(format!("resolution must be >= 10, got {resolution}")));
    }
    let k = instance.num_arms();
    let points = binomial((resolution + k - 1) as u128, (k - 1) as u128);
    if points > budget {
        return Err(BaiError::Budget { points, budget });
    }
    let family = instance.family();
    let mu = instance.means();
    let best = instance.best_arm();
    let challengers: Vec<usize> = instance.challengers().collect();
    let r = resolution;
    let step = 1.0 / r as f64;
    // table[c][i * (r + 1) + j] = W_c(i / r, j / r)
    let table: Vec<Vec<f64>> = challengers
        .iter()
        .map(|&a| {
            let mut t = vec![0.0; (r + 1) * (r + 1)];
            for i in 0..=r {
                for j in 0..=r - i {
                    let (n1, na) = (i as f64 * step, j as f64 * step);
                    t[i * (r + 1) + j] = if i + j == 0 { 0.0 } else { index_raw(family, n1, na, mu[best], mu[a]) };
                }
            }
            t
        })
        .collect();

    struct Search<'a> {
        table: &'a [Vec<f64>],
        r: usize,
        best_value: f64,
        best_point: Vec<usize>,
        current: Vec<usize>,
    }
    impl Search<'_> {
        fn visit(&mut self, i1: usize, c: usize, remaining: usize, running_min: f64) {
            if running_min <= self.best_value {
                return;
            }
            let last = c + 1 == self.table.len();
            let row = &self.table[c][i1 * (self.r + 1)..];
            if last {
                let v = running_min.min(row[remaining]);
                if v > self.best_value {
                    self.current[c] = remaining;
                    self.best_value = v;
                    self.best_point.clone_from(&self.current);
                }
                return;
            }
            for j in 0..=remaining {
                self.current[c] = j;
                self.visit(i1, c + 1, remaining - j, running_min.min(row[j]));
            }
        }
    }
    let mut search = Search {
        table: &table,
        r,
        best_value: f64::NEG_INFINITY,
        best_point: vec![0; challengers.len() + 1],
        current: vec![0; challengers.len() + 1],
    };
    let n = challengers.len();
    for i1 in 0..=r {
        search.current[n] = i1;
        search.visit(i1, 0, r - i1, f64::INFINITY);
    }
    let mut omega = vec![0.0; k];
    omega[best] = search.best_point[n] as f64 * step;
    for (c, &a) in challengers.iter().enumerate() {
        omega[a] = search.best_point[c] as f64 * step;
    }
    Ok(LatticeOptimum { omega, min_index: search.best_value, t_star: 1.0 / search.best_value, points })
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}
