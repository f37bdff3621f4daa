//! Single-parameter exponential families in the mean parametrization.
//!
//! Every family exposes its open mean interval `S`, the KL divergence
//! `d(mu, x) = KL(nu_mu, nu_x)` in nats, both partial derivatives of `d`, the
//! variance function `b''(theta_x)` and a sampler.
//!
//! All public entry points reject means outside `S`. A finite endpoint counts
//! as outside when the mean is within [`BOUNDARY_GUARD`] of it.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{BaiError, Result};

/// Means closer than this to a finite endpoint of `S` are rejected.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// Gap below which two means are treated as equal by the index formulas.
pub const GAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpefFamily {
    Gaussian { sigma: f64 },
    Bernoulli,
    Poisson,
    Exponential,
}

impl Default for SpefFamily {
    fn default() -> Self {
        SpefFamily::Gaussian { sigma: 1.0 }
    }
}

impl std::fmt::Display for SpefFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpefFamily::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            SpefFamily::Bernoulli => f.write_str("bernoulli"),
            SpefFamily::Poisson => f.write_str("poisson"),
            SpefFamily::Exponential => f.write_str("exponential"),
        }
    }
}

impl SpefFamily {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(BaiError::Instance(format!("gaussian sigma must be positive, got {sigma}")));
        }
        Ok(SpefFamily::Gaussian { sigma })
    }

    /// Parses `gaussian`, `bernoulli`, `poisson` or `exponential`.
    pub fn from_name(name: &str, sigma: f64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Self::gaussian(sigma),
            "bernoulli" => Ok(SpefFamily::Bernoulli),
            "poisson" => Ok(SpefFamily::Poisson),
            "exponential" => Ok(SpefFamily::Exponential),
            other => Err(BaiError::Config(format!("unknown family `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SpefFamily::Gaussian { sigma } = *self {
            Self::gaussian(sigma)?;
        }
        Ok(())
    }

    /// Open mean interval `(inf, sup)`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpefFamily::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            SpefFamily::Bernoulli => (0.0, 1.0),
            SpefFamily::Poisson | SpefFamily::Exponential => (0.0, f64::INFINITY),
        }
    }

    pub fn contains(&self, mu: f64) -> bool {
        let (lo, hi) = self.support();
        mu.is_finite()
            && (lo == f64::NEG_INFINITY || mu > lo + BOUNDARY_GUARD)
            && (hi == f64::INFINITY || mu < hi - BOUNDARY_GUARD)
    }

    /// Closure of `S`, the set empirical means may take.
    pub(crate) fn contains_closure(&self, mu: f64) -> bool {
        let (lo, hi) = self.support();
        mu.is_finite() && mu >= lo && mu <= hi
    }

    pub fn check(&self, mu: f64) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(BaiError::Domain { family: self.to_string(), value: mu })
        }
    }

    pub(crate) fn check_closure(&self, mu: f64) -> Result<()> {
        if self.contains_closure(mu) {
            Ok(())
        } else {
            Err(BaiError::Domain { family: self.to_string(), value: mu })
        }
    }

    /// `d(mu, x)` in nats.
    pub fn kl(&self, mu: f64, x: f64) -> Result<f64> {
        self.check(mu)?;
        self.check(x)?;
        Ok(self.kl_raw(mu, x))
    }

    /// Partial derivative of `d` in its first argument, `theta_mu - theta_x`.
    pub fn kl_d1(&self, mu: f64, x: f64) -> Result<f64> {
        self.check(mu)?;
        self.check(x)?;
        Ok(self.natural(mu) - self.natural(x))
    }

    /// Partial derivative of `d` in its second argument, `(x - mu) / b''(theta_x)`.
    pub fn kl_d2(&self, mu: f64, x: f64) -> Result<f64> {
        self.check(mu)?;
        self.check(x)?;
        Ok(self.kl_d2_raw(mu, x))
    }

    /// Variance of the member with mean `x`.
    pub fn variance(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.variance_raw(x))
    }

    /// Natural parameter `theta_mu`.
    pub fn natural(&self, mu: f64) -> f64 {
        match *self {
            SpefFamily::Gaussian { sigma } => mu / (sigma * sigma),
            SpefFamily::Bernoulli => (mu / (1.0 - mu)).ln(),
            SpefFamily::Poisson => mu.ln(),
            SpefFamily::Exponential => -1.0 / mu,
        }
    }

    /// Draws one reward with mean `mu`.
    pub fn sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<f64> {
        self.check(mu)?;
        Ok(self.sample_raw(mu, rng))
    }

    pub(crate) fn sample_raw<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> f64 {
        match *self {
            SpefFamily::Gaussian { sigma } => {
                // sigma > 0 is enforced at construction
                Normal::new(mu, sigma).map(|d| d.sample(rng)).unwrap_or(mu)
            }
            SpefFamily::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            SpefFamily::Poisson => Poisson::new(mu).map(|d| d.sample(rng)).unwrap_or(mu),
            SpefFamily::Exponential => Exp::new(1.0 / mu).map(|d| d.sample(rng)).unwrap_or(mu),
        }
    }

    /// Divergence without domain checks. `mu` may sit on a finite endpoint of
    /// `S` (continuous extension with `0 ln 0 = 0`); `x` must be interior
    /// unless it equals `mu`.
    pub(crate) fn kl_raw(&self, mu: f64, x: f64) -> f64 {
        match *self {
            SpefFamily::Gaussian { sigma } => {
                let gap = mu - x;
                gap * gap / (2.0 * sigma * sigma)
            }
            SpefFamily::Bernoulli => {
                if mu == x {
                    0.0
                } else if mu == 0.0 {
                    -(-x).ln_1p()
                } else if mu == 1.0 {
                    -x.ln()
                } else {
                    let t = x - mu;
                    mu * phi(t / mu) + (1.0 - mu) * phi(-t / (1.0 - mu))
                }
            }
            SpefFamily::Poisson => {
                if mu == 0.0 {
                    x
                } else {
                    mu * phi((x - mu) / mu)
                }
            }
            SpefFamily::Exponential => phi((mu - x) / x),
        }
    }

    pub(crate) fn kl_d2_raw(&self, mu: f64, x: f64) -> f64 {
        (x - mu) / self.variance_raw(x)
    }

    pub(crate) fn variance_raw(&self, x: f64) -> f64 {
        match *self {
            SpefFamily::Gaussian { sigma } => sigma * sigma,
            SpefFamily::Bernoulli => x * (1.0 - x),
            SpefFamily::Poisson => x,
            SpefFamily::Exponential => x * x,
        }
    }
}

/// `u - ln(1 + u)` for `u > -1`, free of cancellation near zero.
fn phi(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        u2 * (0.5 - u / 3.0 + u2 / 4.0 - u2 * u / 5.0 + u2 * u2 / 6.0)
    } else {
        u - u.ln_1p()
    }
}

/// Ground truth of a bandit problem: a family and the arm means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceSpec", into = "InstanceSpec")]
pub struct BanditInstance {
    family: SpefFamily,
    means: Vec<f64>,
    best: usize,
}

/// Serialized form of [`BanditInstance`]; deserializing validates it.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceSpec {
    #[serde(flatten)]
    family: SpefFamily,
    means: Vec<f64>,
}

impl TryFrom<InstanceSpec> for BanditInstance {
    type Error = BaiError;

    fn try_from(spec: InstanceSpec) -> Result<Self> {
        BanditInstance::new(spec.family, spec.means)
    }
}

impl From<BanditInstance> for InstanceSpec {
    fn from(inst: BanditInstance) -> Self {
        InstanceSpec { family: inst.family, means: inst.means }
    }
}

impl BanditInstance {
    pub fn new(family: SpefFamily, means: Vec<f64>) -> Result<Self> {
        family.validate()?;
        if means.len() < 2 {
            return Err(BaiError::Instance(format!("need at least 2 arms, got {}", means.len())));
        }
        for &m in &means {
            family.check(m).map_err(|_| {
                BaiError::Instance(format!("mean {m} outside the open support of {family}"))
            })?;
        }
        let best = argmax(&means);
        let ties = means.iter().filter(|&&m| m == means[best]).count();
        if ties > 1 {
            return Err(BaiError::Instance("the best arm must be unique".into()));
        }
        Ok(BanditInstance { family, means, best })
    }

    pub fn gaussian(means: Vec<f64>) -> Result<Self> {
        Self::new(SpefFamily::default(), means)
    }

    pub fn family(&self) -> SpefFamily {
        self.family
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn best_arm(&self) -> usize {
        self.best
    }

    /// Arms other than the best one, in id order.
    pub fn challengers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.means.len()).filter(move |&a| a != self.best)
    }

    /// `mu_best - mu_a`.
    pub fn gap(&self, arm: usize) -> f64 {
        self.means[self.best] - self.means[arm]
    }
}

/// Index of the first maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
