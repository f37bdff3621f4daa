//! Experiment configuration.
//!
//! The file format is flat TOML; every key is optional and falls back to the
//! defaults below. Command-line flags fill a [`RawConfig`] of their own which
//! is laid over the file with [`RawConfig::merge`].
//!
//! | key         | type              | default                 |
//! |-------------|-------------------|-------------------------|
//! | `family`    | string            | `"gaussian"`            |
//! | `sigma`     | real              | `1.0`                   |
//! | `means`     | array of reals    | required                |
//! | `policies`  | array of strings  | `["at2"]`               |
//! | `alpha`     | real              | `0.5`                   |
//! | `delta`     | real              | `0.001`                 |
//! | `threshold` | `"gk16"`/`"kk21"` | `"gk16"`                |
//! | `runs`      | integer           | `1000`                  |
//! | `seed`      | integer           | `0`                     |
//! | `cap`       | integer           | `10000000`              |
//! | `horizon`   | integer           | `5000`                  |
//! | `stride`    | integer           | `10`                    |
//! | `series`    | array of strings  | all of `anchor`, `indexes`, `proportions` |
//!
//! Policy strings are `at2`, `iat2`, `eb-tcb:<beta>` or `eb-itcb:<beta>`,
//! optionally suffixed `@<alpha>`; without the suffix the `alpha` key applies.

use serde::{Deserialize, Serialize};

use crate::error::{BaiError, Result};
use crate::samplers::{check_delta, Policy, ThresholdStyle, DEFAULT_ALPHA, DEFAULT_CAP};
use crate::spef::{BanditInstance, SpefFamily};

pub const DEFAULT_DELTA: f64 = 0.001;
pub const DEFAULT_RUNS: u64 = 1000;
pub const DEFAULT_HORIZON: u64 = 5000;
pub const DEFAULT_STRIDE: u64 = 10;

/// Trajectory series recorded by `diag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Anchor,
    Indexes,
    Proportions,
}

impl std::str::FromStr for Series {
    type Err = BaiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anchor" => Ok(Series::Anchor),
            "indexes" => Ok(Series::Indexes),
            "proportions" => Ok(Series::Proportions),
            other => Err(BaiError::Config(format!("unknown series `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureOptions {
    pub horizon: u64,
    pub stride: u64,
    pub series: Vec<Series>,
}

impl CaptureOptions {
    pub fn wants(&self, s: Series) -> bool {
        self.series.contains(&s)
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: BanditInstance,
    pub policies: Vec<Policy>,
    pub delta: f64,
    pub threshold: ThresholdStyle,
    pub runs: u64,
    pub master_seed: u64,
    pub cap: u64,
    pub capture: CaptureOptions,
}

impl ExperimentConfig {
    /// Defaults around a given instance and policy list.
    pub fn new(instance: BanditInstance, policies: Vec<Policy>) -> Self {
        ExperimentConfig {
            instance,
            policies,
            delta: DEFAULT_DELTA,
            threshold: ThresholdStyle::default(),
            runs: DEFAULT_RUNS,
            master_seed: 0,
            cap: DEFAULT_CAP,
            capture: CaptureOptions {
                horizon: DEFAULT_HORIZON,
                stride: DEFAULT_STRIDE,
                series: vec![Series::Anchor, Series::Indexes, Series::Proportions],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if self.runs == 0 {
            return Err(BaiError::Config("runs must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(BaiError::Config("at least one policy is required".into()));
        }
        for p in &self.policies {
            p.validate()?;
        }
        let k = self.instance.num_arms() as u64;
        if self.cap < k {
            return Err(BaiError::Config(format!("cap {} must be at least the number of arms {k}", self.cap)));
        }
        if self.capture.horizon < k {
            return Err(BaiError::Config(format!("horizon {} must be at least the number of arms {k}", self.capture.horizon)));
        }
        if self.capture.stride == 0 {
            return Err(BaiError::Config("stride must be positive".into()));
        }
        Ok(())
    }

    /// Compact JSON used in output headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Unresolved key-value configuration, as read from a file or flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub family: Option<String>,
    pub sigma: Option<f64>,
    pub means: Option<Vec<f64>>,
    pub policies: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub threshold: Option<String>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    pub cap: Option<u64>,
    pub horizon: Option<u64>,
    pub stride: Option<u64>,
    pub series: Option<Vec<String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BaiError::Config(e.message().to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BaiError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Keys set in `over` replace those in `self`.
    pub fn merge(self, over: RawConfig) -> RawConfig {
        RawConfig {
            family: over.family.or(self.family),
            sigma: over.sigma.or(self.sigma),
            means: over.means.or(self.means),
            policies: over.policies.or(self.policies),
            alpha: over.alpha.or(self.alpha),
            delta: over.delta.or(self.delta),
            threshold: over.threshold.or(self.threshold),
            runs: over.runs.or(self.runs),
            seed: over.seed.or(self.seed),
            cap: over.cap.or(self.cap),
            horizon: over.horizon.or(self.horizon),
            stride: over.stride.or(self.stride),
            series: over.series.or(self.series),
        }
    }

    pub fn instance(&self) -> Result<BanditInstance> {
        let means = self.means.clone().ok_or_else(|| BaiError::Config("`means` is required".into()))?;
        let family = SpefFamily::from_name(self.family.as_deref().unwrap_or("gaussian"), self.sigma.unwrap_or(1.0))?;
        BanditInstance::new(family, means)
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let instance = self.instance()?;
        let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
        let names = self.policies.clone().unwrap_or_else(|| vec!["at2".into()]);
        let policies = names
            .iter()
            .map(|name| {
                let p: Policy = name.parse()?;
                if name.contains('@') {
                    Ok(p)
                } else {
                    let p = p.with_alpha(alpha);
                    p.validate()?;
                    Ok(p)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut config = ExperimentConfig::new(instance, policies);
        if let Some(d) = self.delta {
            config.delta = d;
        }
        if let Some(t) = &self.threshold {
            config.threshold = t.parse()?;
        }
        if let Some(r) = self.runs {
            config.runs = r;
        }
        if let Some(s) = self.seed {
            config.master_seed = s;
        }
        if let Some(c) = self.cap {
            config.cap = c;
        }
        if let Some(h) = self.horizon {
            config.capture.horizon = h;
        }
        if let Some(s) = self.stride {
            config.capture.stride = s;
        }
        if let Some(series) = &self.series {
            config.capture.series = series.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Parses and resolves a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    RawConfig::parse(text)?.resolve()
}

/// Parses an instance given as `family:m1,m2,...` (e.g. `gaussian:1,0`,
/// `bernoulli:0.7,0.5`), with an optional `gaussian/<sigma>:` form.
pub fn parse_instance(text: &str) -> Result<BanditInstance> {
    let (head, tail) = text
        .trim()
        .split_once(':')
        .ok_or_else(|| BaiError::Config(format!("instance `{text}` must look like family:m1,m2,...")))?;
    let (name, sigma) = match head.split_once('/') {
        Some((name, s)) => {
            (name, s.trim().parse::<f64>().map_err(|_| BaiError::Config(format!("invalid sigma `{s}`")))?)
        }
        None => (head, 1.0),
    };
    let family = SpefFamily::from_name(name.trim(), sigma)?;
    let means = tail
        .split(',')
        .map(|m| m.trim().parse::<f64>().map_err(|_| BaiError::Config(format!("invalid mean `{m}`"))))
        .collect::<Result<Vec<_>>>()?;
    BanditInstance::new(family, means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::SamplingRule;

    const CLOSE_MEANS: &str = r#"
        family = "gaussian"
        means = [7.25, 7.05, 7.0, 7.1]
        policies = ["at2", "iat2", "eb-tcb:0.5", "eb-itcb:0.5@0.3"]
        alpha = 0.4
        delta = 0.001
        threshold = "gk16"
        runs = 4000
        seed = 7
    "#;

    #[test]
    fn parses_a_full_document() {
        let c = parse_config(CLOSE_MEANS).unwrap();
        assert_eq!(c.instance.means(), &[7.25, 7.05, 7.0, 7.1]);
        assert_eq!(c.runs, 4000);
        assert_eq!(c.master_seed, 7);
        assert_eq!(c.policies.len(), 4);
        assert_eq!(c.policies[0].alpha, 0.4);
        assert_eq!(c.policies[3].alpha, 0.3);
        assert_eq!(c.policies[2].rule, SamplingRule::BetaEb { beta: 0.5, improved: false });
        assert_eq!(c.cap, DEFAULT_CAP);
    }

    #[test]
    fn overrides_win() {
        let file = RawConfig::parse(CLOSE_MEANS).unwrap();
        let flags = RawConfig { runs: Some(10), delta: Some(0.1), ..RawConfig::default() };
        let c = file.merge(flags).resolve().unwrap();
        assert_eq!((c.runs, c.delta, c.master_seed), (10, 0.1, 7));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(parse_config("means = [1.0, 0.0]\nbogus = 1").is_err());
        assert!(parse_config("policies = [\"at2\"]").is_err());
        assert!(parse_config("means = [1.0, 0.0]\ndelta = 1.5").is_err());
        assert!(parse_config("means = [1.0, 0.0]\nruns = 0").is_err());
        assert!(parse_config("means = [1.0, 1.0]").is_err());
        assert!(parse_config("means = [0.5, 0.2]\nfamily = \"bernoulli\"\nseries = [\"nope\"]").is_err());
        assert!(parse_config("means = [1, 0").is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let c = parse_config(CLOSE_MEANS).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn instance_strings() {
        let i = parse_instance("gaussian:1,0").unwrap();
        assert_eq!(i.means(), &[1.0, 0.0]);
        let i = parse_instance("gaussian/2:3,1,2").unwrap();
        assert_eq!(i.family(), SpefFamily::Gaussian { sigma: 2.0 });
        assert_eq!(i.best_arm(), 0);
        assert!(parse_instance("bernoulli:0.5,1.2").is_err());
        assert!(parse_instance("1,0").is_err());
        assert!(parse_instance("weibull:1,0").is_err());
    }
}
