//! Fluid dynamics of the anchored top-two samplers.
//!
//! Allocations are continuous and the means are known. Depending on the sign
//! of the anchor `g`, the dynamics runs in one of four regimes:
//!
//! * `GPos`: all new mass goes to the best arm;
//! * `GNeg(B)`: new mass goes to the minimum-index set `B`, keeping its
//!   indexes equal, with every other arm frozen;
//! * `GZero(B)`: mass is shared between the best arm and `B` so that `g`
//!   stays at zero and the indexes in `B` stay equal;
//! * `Linear`: `B` holds every challenger and the allocation is `omega* N`.
//!
//! Segments are integrated with a fourth-order Runge–Kutta predictor on the
//! closed-form right-hand sides, then projected back onto the segment's
//! constraint set. Regime switches are located by bisection on `N`.
//!
//! The same machinery integrates the beta-EB-TCB fluid model, where the
//! anchor is replaced by `beta - N_best / N`.

use serde::{Deserialize, Serialize};

use crate::anchor_index::{anchor_raw, index_raw, mid_raw};
use crate::error::{BaiError, Result};
use crate::oracle::{na_given_n1_raw, solve_beta_optimal, solve_constrained, solve_optimal, OptimalAllocation, DEFAULT_TOL};
use crate::root::itp;
use crate::spef::BanditInstance;

/// Event-function tolerance. Index comparisons scale it by `max(1, I_B)`.
pub const EVENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "regime", content = "active", rename_all = "snake_case")]
pub enum Regime {
    GPos,
    GNeg(Vec<usize>),
    GZero(Vec<usize>),
    Linear,
}

impl Regime {
    pub fn active(&self) -> Option<&[usize]> {
        match self {
            Regime::GNeg(b) | Regime::GZero(b) => Some(b),
            _ => None,
        }
    }

    /// Compact label: `gpos`, `gneg:1|2`, `gzero:1|2|3`, `linear`.
    pub fn label(&self) -> String {
        let join = |b: &[usize]| b.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("|");
        match self {
            Regime::GPos => "gpos".into(),
            Regime::GNeg(b) => format!("gneg:{}", join(b)),
            Regime::GZero(b) => format!("gzero:{}", join(b)),
            Regime::Linear => "linear".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub allocations: Vec<f64>,
    pub total: f64,
    pub regime: Regime,
    /// Common index of the active set; the smallest index in `GPos`.
    pub common_index: f64,
    pub anchor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The anchor reached zero.
    AnchorZero,
    /// The common index met the index of an arm outside the active set.
    IndexCatchUp,
    /// Every challenger is active with a zero anchor.
    Stable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidEvent {
    pub n: f64,
    pub kind: EventKind,
    pub arms: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub samples: Vec<FluidState>,
    pub events: Vec<FluidEvent>,
    /// First `N` at which the `Linear` regime holds.
    pub stability_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dynamics", rename_all = "snake_case")]
pub enum Dynamics {
    Anchored,
    BetaEb { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidControls {
    pub dynamics: Dynamics,
    /// Upper bound on a step, as a fraction of the current `N`.
    pub max_step_ratio: f64,
    /// Record a sample every this many steps (events and the endpoints are always recorded).
    pub sample_stride: usize,
    pub event_tol: f64,
    /// Relative width, in `N`, to which events are located.
    pub locate_tol: f64,
}

impl Default for FluidControls {
    fn default() -> Self {
        FluidControls {
            dynamics: Dynamics::Anchored,
            max_step_ratio: 1e-3,
            sample_stride: 10,
            event_tol: EVENT_TOL,
            locate_tol: 1e-10,
        }
    }
}

/// Derivatives of the indexes with respect to `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDerivatives {
    /// `I_B'`; absent in `GPos`.
    pub common: Option<f64>,
    /// `I_a'` for challengers outside the active set.
    pub outside: Vec<(usize, f64)>,
}

/// Instance plus its optimal proportions; evaluates right-hand sides and
/// integrates trajectories.
#[derive(Debug, Clone)]
pub struct FluidModel {
    instance: BanditInstance,
    optimum: OptimalAllocation,
    dynamics: Dynamics,
}

/// Pairwise quantities `d_{1,a}`, `d_{a,a}` and `h_a` at the current allocation.
#[derive(Debug, Clone, Copy)]
struct Pair {
    d1a: f64,
    daa: f64,
    h: f64,
}

impl FluidModel {
    pub fn new(instance: &BanditInstance) -> Result<Self> {
        Self::with_dynamics(instance, Dynamics::Anchored)
    }

    pub fn with_dynamics(instance: &BanditInstance, dynamics: Dynamics) -> Result<Self> {
        let optimum = match dynamics {
            Dynamics::Anchored => solve_optimal(instance, DEFAULT_TOL)?,
            Dynamics::BetaEb { beta } => solve_beta_optimal(instance, beta, DEFAULT_TOL)?,
        };
        Ok(FluidModel { instance: instance.clone(), optimum, dynamics })
    }

    pub fn instance(&self) -> &BanditInstance {
        &self.instance
    }

    /// `omega*` (or `omega*(beta)` for the beta-EB dynamics).
    pub fn optimum(&self) -> &OptimalAllocation {
        &self.optimum
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    fn best(&self) -> usize {
        self.instance.best_arm()
    }

    /// Anchor of the configured dynamics at `alloc`.
    pub fn anchor_value(&self, alloc: &[f64]) -> f64 {
        match self.dynamics {
            Dynamics::Anchored => anchor_raw(self.instance.family(), self.instance.means(), alloc, self.best()),
            Dynamics::BetaEb { beta } => beta - alloc[self.best()] / alloc.iter().sum::<f64>(),
        }
    }

    /// Index of challenger `a` against the best arm.
    pub fn index(&self, alloc: &[f64], a: usize) -> f64 {
        let mu = self.instance.means();
        let best = self.best();
        index_raw(self.instance.family(), alloc[best], alloc[a], mu[best], mu[a])
    }

    fn pair(&self, alloc: &[f64], a: usize) -> Pair {
        let family = self.instance.family();
        let mu = self.instance.means();
        let best = self.best();
        let (n1, na) = (alloc[best], alloc[a]);
        if n1 + na == 0.0 {
            return Pair { d1a: 0.0, daa: family.kl_raw(mu[a], mu[best]), h: 0.0 };
        }
        let x = mid_raw(n1, na, mu[best], mu[a]);
        let d1a = family.kl_raw(mu[best], x);
        let daa = family.kl_raw(mu[a], x);
        let h = if na == 0.0 || n1 == 0.0 || d1a == 0.0 || daa == 0.0 {
            0.0
        } else {
            let f = d1a / daa * (family.kl_d2_raw(mu[a], x) / daa - family.kl_d2_raw(mu[best], x) / d1a);
            let s = n1 / (n1 + na);
            f * s * s * (mu[best] - mu[a])
        };
        Pair { d1a, daa, h }
    }

    fn outside_of<'a>(&'a self, active: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        self.instance.challengers().filter(move |a| !active.contains(a))
    }

    /// `N_a'` for every arm in the regime recorded in `state`.
    pub fn rhs(&self, state: &FluidState) -> Result<Vec<f64>> {
        Ok(self.rhs_full(&state.allocations, &state.regime)?.0)
    }

    /// Derivatives of the common index and of the outside indexes.
    pub fn index_rhs(&self, state: &FluidState) -> Result<IndexDerivatives> {
        let (_, common) = self.rhs_full(&state.allocations, &state.regime)?;
        let d = self.rhs(state)?;
        let best = self.best();
        let outside: Vec<usize> = match &state.regime {
            Regime::Linear => Vec::new(),
            Regime::GPos => self.instance.challengers().collect(),
            Regime::GNeg(b) | Regime::GZero(b) => self.outside_of(b).collect(),
        };
        let outside = outside.into_iter().map(|a| (a, d[best] * self.pair(&state.allocations, a).d1a)).collect();
        Ok(IndexDerivatives { common, outside })
    }

    fn rhs_full(&self, alloc: &[f64], regime: &Regime) -> Result<(Vec<f64>, Option<f64>)> {
        let k = self.instance.num_arms();
        let best = self.best();
        if alloc.len() != k {
            return Err(BaiError::Regime("allocation length differs from the number of arms".into()));
        }
        let mut d = vec![0.0; k];
        match regime {
            Regime::GPos => {
                d[best] = 1.0;
                Ok((d, None))
            }
            Regime::Linear => {
                d.copy_from_slice(&self.optimum.omega);
                Ok((d, Some(self.optimum.common_index)))
            }
            Regime::GNeg(active) => {
                self.check_active(active)?;
                let pairs: Vec<Pair> = active.iter().map(|&a| self.pair(alloc, a)).collect();
                let d_b = 1.0 / pairs.iter().map(|p| 1.0 / p.daa).sum::<f64>();
                for (&a, p) in active.iter().zip(&pairs) {
                    d[a] = d_b / p.daa;
                }
                Ok((d, Some(d_b)))
            }
            Regime::GZero(active) => {
                self.check_active(active)?;
                match self.dynamics {
                    Dynamics::Anchored => Ok(self.anchored_zero_rhs(alloc, active)),
                    Dynamics::BetaEb { beta } => self.beta_zero_rhs(alloc, active, beta),
                }
            }
        }
    }

    fn check_active(&self, active: &[usize]) -> Result<()> {
        let best = self.best();
        if active.is_empty() || active.iter().any(|&a| a == best || a >= self.instance.num_arms()) {
            return Err(BaiError::Regime(format!("invalid active set {active:?}")));
        }
        Ok(())
    }

    /// Right-hand side while the anchor is held at zero with active set `B`.
    fn anchored_zero_rhs(&self, alloc: &[f64], active: &[usize]) -> (Vec<f64>, Option<f64>) {
        let best = self.best();
        let mut d = vec![0.0; alloc.len()];
        let pairs: Vec<Pair> = active.iter().map(|&a| self.pair(alloc, a)).collect();
        let h_b: f64 = pairs.iter().map(|p| p.h / p.daa).sum();
        let h_n: f64 = self.outside_of(active).map(|a| self.pair(alloc, a).h * alloc[a]).sum();
        let inv_d_b: f64 = pairs.iter().map(|p| 1.0 / p.daa).sum();
        let mass_b: f64 = alloc[best] + active.iter().map(|&a| alloc[a]).sum::<f64>();
        let denom = mass_b * h_b + inv_d_b * h_n;
        d[best] = alloc[best] * h_b / denom;
        for (&a, p) in active.iter().zip(&pairs) {
            d[a] = (alloc[a] * h_b + h_n / p.daa) / denom;
        }
        let i_b = active.iter().map(|&a| self.index(alloc, a)).sum::<f64>() / active.len() as f64;
        (d, Some((i_b * h_b + h_n) / denom))
    }

    fn beta_zero_rhs(&self, alloc: &[f64], active: &[usize], beta: f64) -> Result<(Vec<f64>, Option<f64>)> {
        let best = self.best();
        let n: f64 = alloc.iter().sum();
        if (alloc[best] - beta * n).abs() > 1e-8 * n {
            return Err(BaiError::Regime(format!(
                "beta-EB state needs N_best = beta N, got {} vs {}",
                alloc[best],
                beta * n
            )));
        }
        let mut d = vec![0.0; alloc.len()];
        let pairs: Vec<Pair> = active.iter().map(|&a| self.pair(alloc, a)).collect();
        let d_b = 1.0 / pairs.iter().map(|p| 1.0 / p.daa).sum::<f64>();
        let mass_b: f64 = active.iter().map(|&a| alloc[a]).sum();
        d[best] = beta;
        for (&a, p) in active.iter().zip(&pairs) {
            d[a] = (((1.0 - beta) * n - mass_b) * d_b + alloc[a] * p.daa) / (n * p.daa);
        }
        let i_b = active.iter().map(|&a| self.index(alloc, a)).sum::<f64>() / active.len() as f64;
        Ok((d, Some((1.0 - beta - mass_b / n) * d_b + i_b / n)))
    }

    /// Builds a state with regime classified from the allocation alone.
    pub fn classify(&self, alloc: &[f64], event_tol: f64) -> Result<FluidState> {
        let k = self.instance.num_arms();
        if alloc.len() != k || alloc.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
            return Err(BaiError::Regime("initial allocations must be finite, >= 0 and one per arm".into()));
        }
        let total: f64 = alloc.iter().sum();
        if !(total > 0.0) {
            return Err(BaiError::Regime("initial total allocation must be positive".into()));
        }
        let g = self.anchor_value(alloc);
        let regime = if g > event_tol {
            Regime::GPos
        } else {
            let b = self.min_index_set(alloc, event_tol);
            if g < -event_tol {
                Regime::GNeg(b)
            } else if b.len() == k - 1 {
                Regime::Linear
            } else {
                Regime::GZero(b)
            }
        };
        Ok(self.state(alloc.to_vec(), regime))
    }

    fn min_index_set(&self, alloc: &[f64], event_tol: f64) -> Vec<usize> {
        let idx: Vec<(usize, f64)> = self.instance.challengers().map(|a| (a, self.index(alloc, a))).collect();
        let min = idx.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let tol = event_tol * min.max(1.0);
        idx.into_iter().filter(|p| p.1 - min <= tol).map(|p| p.0).collect()
    }

    fn state(&self, allocations: Vec<f64>, regime: Regime) -> FluidState {
        let total = allocations.iter().sum();
        let common_index = match regime.active() {
            Some(b) => b.iter().map(|&a| self.index(&allocations, a)).sum::<f64>() / b.len() as f64,
            None => self.instance.challengers().map(|a| self.index(&allocations, a)).fold(f64::INFINITY, f64::min),
        };
        let anchor = self.anchor_value(&allocations);
        FluidState { allocations, total, regime, common_index, anchor }
    }

    /// Exact state of a segment at total mass `n`. `base` holds the frozen
    /// allocations; `guess` warm-starts the common-index search.
    fn exact(&self, regime: &Regime, base: &[f64], n: f64, guess: f64) -> Result<Vec<f64>> {
        let best = self.best();
        match regime {
            Regime::GPos => {
                let rest: f64 = self.instance.challengers().map(|a| base[a]).sum();
                let mut alloc = base.to_vec();
                alloc[best] = n - rest;
                Ok(alloc)
            }
            Regime::Linear => Ok(self.optimum.omega.iter().map(|w| w * n).collect()),
            Regime::GNeg(active) => {
                let frozen: f64 = base[best] + self.outside_of(active).map(|a| base[a]).sum::<f64>();
                self.fill_active(base, base[best], active, n - frozen, guess)
            }
            Regime::GZero(active) => match self.dynamics {
                Dynamics::BetaEb { beta } => {
                    let frozen: f64 = self.outside_of(active).map(|a| base[a]).sum();
                    let mut alloc = base.to_vec();
                    alloc[best] = beta * n;
                    self.fill_active(&alloc, beta * n, active, (1.0 - beta) * n - frozen, guess)
                }
                Dynamics::Anchored => self.project_zero(base, active, n, guess),
            },
        }
    }

    /// Allocations of `active` at best-arm mass `n1` with equal indexes and total `mass`.
    fn fill_active(&self, base: &[f64], n1: f64, active: &[usize], mass: f64, guess: f64) -> Result<Vec<f64>> {
        let family = self.instance.family();
        let mu = self.instance.means();
        let best = self.best();
        let cap = active.iter().map(|&a| n1 * family.kl_raw(mu[best], mu[a])).fold(f64::INFINITY, f64::min);
        let sum_at = |i: f64| -> f64 {
            if i <= 0.0 {
                return -mass;
            }
            let mut s = 0.0;
            for &a in active {
                match na_given_n1_raw(family, mu[best], mu[a], n1, i) {
                    Ok(x) => s += x,
                    Err(_) => return f64::INFINITY,
                }
            }
            s - mass
        };
        let index = self.bracketed_index(sum_at, guess, cap, mass.abs().max(1.0) * 1e-15)?;
        let mut alloc = base.to_vec();
        alloc[best] = n1;
        for &a in active {
            alloc[a] = na_given_n1_raw(family, mu[best], mu[a], n1, index)?;
        }
        Ok(alloc)
    }

    fn project_zero(&self, base: &[f64], active: &[usize], n: f64, guess: f64) -> Result<Vec<f64>> {
        let k = self.instance.num_arms();
        let mass = |i: f64| -> f64 {
            if i <= 0.0 {
                return f64::NEG_INFINITY;
            }
            match solve_constrained(&self.instance, active, base, &vec![i; k]) {
                Ok(sol) => sol.total() - n,
                Err(_) => f64::NAN,
            }
        };
        let index = self.bracketed_index(mass, guess, f64::INFINITY, n * 1e-15)?;
        Ok(solve_constrained(&self.instance, active, base, &vec![index; k])?.allocations)
    }

    /// Root of an increasing function of the common index on `(0, cap)`,
    /// bracketed around `guess`.
    fn bracketed_index<F: FnMut(f64) -> f64>(&self, mut f: F, guess: f64, cap: f64, ftol: f64) -> Result<f64> {
        let guess = if guess > 0.0 && guess < cap { guess } else { (cap * 0.5).min(1.0) };
        let mut lo = guess * (1.0 - 1e-6);
        let mut hi = (guess * (1.0 + 1e-6)).min(0.5 * (guess + cap));
        let mut f_lo = f(lo);
        let mut f_hi = f(hi);
        let mut spread: f64 = 1e-6;
        for _ in 0..2000 {
            if f_lo.is_nan() || f_hi.is_nan() {
                return Err(BaiError::NonConvergence { what: "common-index projection".into(), residual: f64::NAN });
            }
            if f_lo <= 0.0 && f_hi >= 0.0 {
                break;
            }
            spread = (spread * 4.0).min(0.5);
            if f_lo > 0.0 {
                hi = lo;
                f_hi = f_lo;
                lo *= 1.0 - spread;
                f_lo = f(lo);
            } else {
                lo = hi;
                f_lo = f_hi;
                hi = (hi * (1.0 + spread * 4.0)).min(0.5 * (hi + cap));
                f_hi = f(hi);
            }
            if lo < 1e-300 {
                return Err(BaiError::NonConvergence { what: "common index collapsed to zero".into(), residual: f_lo });
            }
        }
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_hi == 0.0 {
            return Ok(hi);
        }
        Ok(itp(f, lo, hi, f_lo, f_hi, 1e-16 * hi, ftol)?.x)
    }

    fn rk4_guess(&self, alloc: &[f64], regime: &Regime, index: f64, h: f64) -> Result<f64> {
        let k = alloc.len();
        let stage = |y: &[f64], scale: f64, dy: &[f64]| -> Vec<f64> {
            y.iter().zip(dy).map(|(a, b)| (a + scale * b).max(0.0)).collect()
        };
        let (k1, c1) = self.rhs_full(alloc, regime)?;
        let y2 = stage(alloc, 0.5 * h, &k1);
        let (k2, c2) = self.rhs_full(&y2, regime)?;
        let y3 = stage(alloc, 0.5 * h, &k2);
        let (k3, c3) = self.rhs_full(&y3, regime)?;
        let y4 = stage(alloc, h, &k3);
        let (_, c4) = self.rhs_full(&y4, regime)?;
        debug_assert_eq!(k1.len(), k);
        let slope = match (c1, c2, c3, c4) {
            (Some(a), Some(b), Some(c), Some(d)) => (a + 2.0 * b + 2.0 * c + d) / 6.0,
            _ => 0.0,
        };
        Ok(index + h * slope)
    }

    fn common_index(&self, alloc: &[f64], regime: &Regime) -> f64 {
        match regime.active() {
            Some(b) => b.iter().map(|&a| self.index(alloc, a)).sum::<f64>() / b.len() as f64,
            None => 0.0,
        }
    }

    fn min_outside(&self, alloc: &[f64], active: &[usize]) -> Option<f64> {
        self.outside_of(active).map(|a| self.index(alloc, a)).reduce(f64::min)
    }

    fn catch_up_gap(&self, alloc: &[f64], regime: &Regime) -> Option<f64> {
        let active = regime.active()?;
        let outside = self.min_outside(alloc, active)?;
        Some(outside - self.common_index(alloc, regime))
    }

    /// Integrates from `initial` up to total mass `horizon`.
    pub fn integrate(&self, initial: &[f64], horizon: f64, controls: &FluidControls) -> Result<FluidTrajectory> {
        if controls.dynamics != self.dynamics {
            return Err(BaiError::Regime("controls request different dynamics than the model".into()));
        }
        if !(controls.max_step_ratio > 0.0) || controls.sample_stride == 0 {
            return Err(BaiError::Config("step ratio and sample stride must be positive".into()));
        }
        let tol = controls.event_tol;
        let mut state = self.classify(initial, tol)?;
        if !(horizon > state.total) {
            return Err(BaiError::Config(format!("horizon {horizon} must exceed the initial total {}", state.total)));
        }
        let mut samples = vec![state.clone()];
        let mut events = Vec::new();
        let mut stability_time = None;
        if state.regime == Regime::Linear {
            stability_time = Some(state.total);
            events.push(FluidEvent { n: state.total, kind: EventKind::Stable, arms: self.instance.challengers().collect() });
        }
        let mut base = state.allocations.clone();
        let mut steps = 0usize;

        while state.total < horizon {
            let n0 = state.total;
            if horizon - n0 <= 1e-12 * horizon {
                let alloc = self.exact(&state.regime, &base, horizon, state.common_index)?;
                state = self.state(alloc, state.regime.clone());
                break;
            }
            let h = (controls.max_step_ratio * n0).min(horizon - n0);
            if h < 1e-15 * n0 {
                return Err(BaiError::StepUnderflow { at: n0, allocations: state.allocations.clone() });
            }
            let n1 = if horizon - (n0 + h) < 1e-12 * horizon { horizon } else { n0 + h };
            let regime = state.regime.clone();
            let guess = self.rk4_guess(&state.allocations, &regime, state.common_index, n1 - n0)?;
            let next = self.exact(&regime, &base, n1, guess)?;

            // events along [n0, n1]
            let g_end = self.anchor_value(&next);
            let anchor_hit = match regime {
                Regime::GPos => g_end <= 0.0,
                Regime::GNeg(_) => g_end >= 0.0,
                _ => false,
            };
            let catch_hit = self.catch_up_gap(&next, &regime).is_some_and(|gap| gap <= 0.0);

            if !anchor_hit && !catch_hit {
                state = self.state(next, regime);
                steps += 1;
                if steps.is_multiple_of(controls.sample_stride) || state.total >= horizon {
                    samples.push(state.clone());
                }
                continue;
            }

            let locate = |which: EventKind| -> Result<f64> {
                let eval = |n: f64| -> Result<f64> {
                    let alloc = self.exact(&regime, &base, n, state.common_index)?;
                    Ok(match which {
                        EventKind::AnchorZero => {
                            let g = self.anchor_value(&alloc);
                            if matches!(regime, Regime::GPos) {
                                -g
                            } else {
                                g
                            }
                        }
                        _ => -self.catch_up_gap(&alloc, &regime).unwrap_or(f64::NEG_INFINITY),
                    })
                };
                // eval is negative before the event and >= 0 after it
                let (mut lo, mut hi) = (n0, n1);
                while hi - lo > controls.locate_tol * hi {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let v = eval(mid)?;
                    if v >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(hi)
            };
            let n_anchor = if anchor_hit { Some(locate(EventKind::AnchorZero)?) } else { None };
            let n_catch = if catch_hit { Some(locate(EventKind::IndexCatchUp)?) } else { None };
            let n_event = n_anchor.into_iter().chain(n_catch).fold(f64::INFINITY, f64::min);
            let simultaneous = |n: Option<f64>| n.is_some_and(|t| t - n_event <= 2.0 * controls.locate_tol * n_event);
            let anchor_now = simultaneous(n_anchor);
            let catch_now = simultaneous(n_catch);

            let at_event = self.exact(&regime, &base, n_event, state.common_index)?;
            let mut new_regime = regime.clone();
            if anchor_now {
                let b = self.min_index_set(&at_event, tol);
                events.push(FluidEvent { n: n_event, kind: EventKind::AnchorZero, arms: b.clone() });
                new_regime = Regime::GZero(b);
            }
            if catch_now || anchor_now {
                // re-evaluate the active set: the old one plus every arm within tolerance
                let mut b: Vec<usize> = new_regime.active().map(|b| b.to_vec()).unwrap_or_default();
                let before = b.clone();
                let i_b = self.common_index(&at_event, &new_regime);
                let scale = tol * i_b.max(1.0);
                for a in self.outside_of(&before) {
                    if self.index(&at_event, a) - i_b <= scale {
                        b.push(a);
                    }
                }
                b.sort_unstable();
                if b != before || catch_now {
                    let joined: Vec<usize> = b.iter().copied().filter(|a| !before.contains(a)).collect();
                    if catch_now || !joined.is_empty() {
                        events.push(FluidEvent { n: n_event, kind: EventKind::IndexCatchUp, arms: joined });
                    }
                }
                new_regime = match new_regime {
                    Regime::GNeg(_) => Regime::GNeg(b),
                    _ => Regime::GZero(b),
                };
            }
            if let Regime::GZero(b) = &new_regime {
                if b.len() + 1 == self.instance.num_arms() {
                    events.push(FluidEvent { n: n_event, kind: EventKind::Stable, arms: b.clone() });
                    stability_time.get_or_insert(n_event);
                    new_regime = Regime::Linear;
                }
            }
            let guess = self.common_index(&at_event, &new_regime);
            let projected = self.exact(&new_regime, &at_event, n_event, guess)?;
            base = projected.clone();
            state = self.state(projected, new_regime);
            samples.push(state.clone());
            steps += 1;
        }
        if samples.last().map(|s| s.total) != Some(state.total) {
            samples.push(state);
        }
        Ok(FluidTrajectory { samples, events, stability_time })
    }
}

/// `N_a'` for the anchored dynamics in the regime recorded in `state`.
pub fn fluid_rhs(instance: &BanditInstance, state: &FluidState) -> Result<Vec<f64>> {
    FluidModel::new(instance)?.rhs(state)
}

/// `I_B'` and the outside-index derivatives for the anchored dynamics.
pub fn index_rhs(instance: &BanditInstance, state: &FluidState) -> Result<IndexDerivatives> {
    FluidModel::new(instance)?.index_rhs(state)
}

/// Right-hand side of the beta-EB-TCB fluid model: `(N_a', I_B')`.
pub fn beta_fluid_rhs(instance: &BanditInstance, state: &FluidState, beta: f64) -> Result<(Vec<f64>, f64)> {
    let model = FluidModel::with_dynamics(instance, Dynamics::BetaEb { beta })?;
    let regime = match &state.regime {
        Regime::Linear => Regime::GZero(instance.challengers().collect()),
        Regime::GZero(b) => Regime::GZero(b.clone()),
        other => return Err(BaiError::Regime(format!("beta-EB right-hand side needs a zero-anchor state, got {}", other.label()))),
    };
    let (d, common) = model.rhs_full(&state.allocations, &regime)?;
    Ok((d, common.unwrap_or(f64::NAN)))
}

/// Integrates the anchored (or beta-EB) fluid dynamics from `initial` to `horizon`.
pub fn integrate(
    instance: &BanditInstance,
    initial: &[f64],
    horizon: f64,
    controls: &FluidControls,
) -> Result<FluidTrajectory> {
    FluidModel::with_dynamics(instance, controls.dynamics)?.integrate(initial, horizon, controls)
}
