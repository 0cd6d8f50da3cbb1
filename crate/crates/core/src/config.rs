//! Experiment configuration and its TOML schema.
//!
//! ```toml
//! scenario = "static_distributional"
//! p_levels = [0.01, 0.1]
//! P_sizes = [251, 2500]
//! nu = 4
//! alpha = 0.05
//! replications = 10000
//! master_seed = 7
//!
//! [scoring]
//! family = "gpl"
//! b = 1.0
//! ```
//!
//! Optional keys: `p_star` (list, required by `static_wrong_quantile`), `B`,
//! `block_length`, `estimator` (`iid` | `mbb`), `statistic` (`tmax` | `tr`),
//! `burn_in`, `oracle_length`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bootstrap::default_block_length;
use crate::dgp::DEFAULT_BURN_IN;
use crate::mcs::McsStatistic;
use crate::oracle::DEFAULT_LONG_RUN;
use crate::scoring::{JointLossSpec, Parametrization, QuantileLossSpec, ScoringSpec};
use crate::{Error, Result};

pub const P_LEVELS: [f64; 4] = [0.01, 0.025, 0.05, 0.1];
pub const P_SIZES: [usize; 6] = [63, 126, 251, 500, 1000, 2500];
pub const NU_VALUES: [f64; 4] = [3.0, 4.0, 7.0, 12.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    StaticDistributional,
    StaticWrongQuantile,
    DynamicDistributional,
    DynamicVolatility,
    McsM5,
    McsM10,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::StaticDistributional => "static_distributional",
            Self::StaticWrongQuantile => "static_wrong_quantile",
            Self::DynamicDistributional => "dynamic_distributional",
            Self::DynamicVolatility => "dynamic_volatility",
            Self::McsM5 => "mcs_m5",
            Self::McsM10 => "mcs_m10",
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Self::StaticDistributional | Self::StaticWrongQuantile)
    }

    pub fn is_mcs(&self) -> bool {
        matches!(self, Self::McsM5 | Self::McsM10)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scoring rule without its level; the level comes from each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScoringRule {
    Gpl {
        #[serde(default = "one")]
        b: f64,
    },
    Al,
    Nz,
    Fzg,
}

fn one() -> f64 {
    1.0
}

impl ScoringRule {
    pub fn at(&self, p: f64) -> Result<ScoringSpec> {
        Ok(match *self {
            Self::Gpl { b } => ScoringSpec::Quantile(QuantileLossSpec::new(p, b)?),
            Self::Al => ScoringSpec::Joint(JointLossSpec::new(p, Parametrization::Al)?),
            Self::Nz => ScoringSpec::Joint(JointLossSpec::new(p, Parametrization::Nz)?),
            Self::Fzg => ScoringSpec::Joint(JointLossSpec::new(p, Parametrization::Fzg)?),
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Gpl { .. } => "gpl",
            Self::Al => "al",
            Self::Nz => "nz",
            Self::Fzg => "fzg",
        }
    }

    /// The GPL degree or the parametrization name.
    pub fn parameter(&self) -> String {
        match self {
            Self::Gpl { b } => b.to_string(),
            Self::Al => "AL".into(),
            Self::Nz => "NZ".into(),
            Self::Fzg => "FZG".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Iid,
    Mbb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub p_levels: Vec<f64>,
    #[serde(rename = "P_sizes")]
    pub p_sizes: Vec<usize>,
    pub nu: f64,
    pub scoring: ScoringRule,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    #[serde(rename = "B", default)]
    pub resamples: Option<usize>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub p_star: Option<Vec<f64>>,
    #[serde(default)]
    pub block_length: Option<usize>,
    #[serde(default)]
    pub estimator: Option<EstimatorKind>,
    #[serde(default)]
    pub statistic: Option<McsStatistic>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub oracle_length: Option<usize>,
}

fn default_alpha() -> f64 {
    0.05
}

fn member(x: f64, set: &[f64]) -> bool {
    set.iter().any(|v| (v - x).abs() < 1e-12)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("field `{field}`: {msg}")));
        if self.p_levels.is_empty() || self.p_levels.iter().any(|p| !member(*p, &P_LEVELS)) {
            return bad("p_levels", format!("{:?} must be a nonempty subset of {P_LEVELS:?}", self.p_levels));
        }
        if self.p_sizes.is_empty() || self.p_sizes.iter().any(|n| !P_SIZES.contains(n)) {
            return bad("P_sizes", format!("{:?} must be a nonempty subset of {P_SIZES:?}", self.p_sizes));
        }
        if !member(self.nu, &NU_VALUES) {
            return bad("nu", format!("{} must be one of {NU_VALUES:?}", self.nu));
        }
        if self.scenario.is_mcs() {
            if !member(self.nu, &[3.0, 7.0, 12.0]) {
                return bad("nu", format!("{} is not used by MCS scenarios (3, 7 or 12)", self.nu));
            }
        } else if self.nu != 4.0 {
            return bad("nu", format!("{} is not used by pairwise scenarios (4)", self.nu));
        }
        if let ScoringRule::Gpl { b } = self.scoring {
            if !(b > 0.0 && b.is_finite()) {
                return bad("scoring.b", format!("{b} must be positive"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("{} must lie in (0, 1)", self.alpha));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if self.resamples == Some(0) {
            return bad("B", "must be at least 1".into());
        }
        if let Some(l) = self.block_length {
            let min_p = *self.p_sizes.iter().min().expect("nonempty");
            if l == 0 || l > min_p {
                return bad("block_length", format!("{l} must lie in 1..={min_p}"));
            }
        }
        match (&self.p_star, self.scenario) {
            (None, Scenario::StaticWrongQuantile) => {
                return bad("p_star", "required by static_wrong_quantile".into());
            }
            (Some(ps), Scenario::StaticWrongQuantile) => {
                if ps.is_empty() || ps.iter().any(|p| !(*p > 0.0 && *p < 0.5)) {
                    return bad("p_star", format!("{ps:?} must be nonempty levels in (0, 0.5)"));
                }
            }
            (Some(_), _) => {
                return bad("p_star", format!("only used by static_wrong_quantile, not {}", self.scenario));
            }
            (None, _) => {}
        }
        if self.statistic.is_some() && !self.scenario.is_mcs() {
            return bad("statistic", "only used by MCS scenarios".into());
        }
        if self.estimator.is_some() && self.scenario.is_mcs() {
            return bad("estimator", "MCS scenarios always use the block bootstrap".into());
        }
        if matches!(self.oracle_length, Some(n) if n < 1000) {
            return bad("oracle_length", "must be at least 1000".into());
        }
        Ok(())
    }

    pub fn max_p_size(&self) -> usize {
        *self.p_sizes.iter().max().expect("validated")
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(DEFAULT_BURN_IN)
    }

    pub fn oracle_length(&self) -> usize {
        self.oracle_length.unwrap_or(DEFAULT_LONG_RUN)
    }

    /// Bootstrap resamples: 5,000 for MCS and 2,500 for dynamic DM tests
    /// unless configured.
    pub fn resamples(&self) -> usize {
        self.resamples.unwrap_or(if self.scenario.is_mcs() { 5_000 } else { 2_500 })
    }

    pub fn estimator(&self) -> EstimatorKind {
        self.estimator.unwrap_or(if self.scenario.is_static() {
            EstimatorKind::Iid
        } else {
            EstimatorKind::Mbb
        })
    }

    pub fn statistic(&self) -> McsStatistic {
        self.statistic.unwrap_or(McsStatistic::Tmax)
    }

    pub fn block_length(&self, p_size: usize) -> usize {
        self.block_length.unwrap_or_else(|| default_block_length(p_size))
    }

    /// `master_seed` is mandatory at run time.
    pub fn seed(&self) -> Result<u64> {
        self.master_seed
            .ok_or_else(|| Error::Config("field `master_seed`: missing".into()))
    }
}
