//! Return simulation from GARCH-type processes and volatility filtering.
//!
//! Returns are daily log-returns scaled by 100: `r_t = z_t * sqrt(sigma2_t)`.
//! The leverage term of the threshold model fires on the sign of the previous
//! shock, `sigma2_t = omega + (alpha + gamma 1{r_{t-1} < 0}) r_{t-1}^2 + beta sigma2_{t-1}`.

use std::io::Write;

use rand_distr::Distribution;

use crate::distributions::InnovationDistribution;
use crate::rng::Stream;
use crate::{Error, Result};

pub const DEFAULT_BURN_IN: usize = 2_000;
pub const RISKMETRICS_LAMBDA: f64 = 0.94;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolatilityModel {
    Constant { sigma2: f64 },
    Garch11 { omega: f64, alpha: f64, beta: f64 },
    Tgarch11 { omega: f64, alpha: f64, gamma: f64, beta: f64 },
    RiskMetricsEwma { lambda: f64 },
}

impl VolatilityModel {
    /// Parameters of the threshold-GARCH data-generating process.
    pub const REFERENCE_TGARCH: Self = Self::Tgarch11 {
        omega: 0.03,
        alpha: 0.04,
        gamma: 0.1,
        beta: 0.9,
    };

    fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Garch11 { .. } => "GARCH(1,1)",
            Self::Tgarch11 { .. } => "TGARCH(1,1)",
            Self::RiskMetricsEwma { .. } => "RiskMetrics",
        }
    }

    /// Persistence `alpha + gamma/2 + beta` (symmetric innovations).
    fn persistence(&self) -> Option<f64> {
        match *self {
            Self::Garch11 { alpha, beta, .. } => Some(alpha + beta),
            Self::Tgarch11 { alpha, gamma, beta, .. } => Some(alpha + 0.5 * gamma + beta),
            _ => None,
        }
    }

    /// Checks sign constraints; does not check stationarity.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { sigma2 } => sigma2 > 0.0 && sigma2.is_finite(),
            Self::Garch11 { omega, alpha, beta } => {
                omega > 0.0 && alpha >= 0.0 && beta >= 0.0
            }
            Self::Tgarch11 { omega, alpha, gamma, beta } => {
                omega > 0.0 && alpha >= 0.0 && gamma >= 0.0 && beta >= 0.0
            }
            Self::RiskMetricsEwma { lambda } => lambda > 0.0 && lambda < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}")))
        }
    }

    pub fn unconditional_variance(&self) -> Result<f64> {
        self.validate()?;
        match *self {
            Self::Constant { sigma2 } => Ok(sigma2),
            Self::RiskMetricsEwma { .. } => Err(Error::Unsupported(
                "RiskMetrics EWMA has no finite unconditional variance".into(),
            )),
            Self::Garch11 { omega, .. } | Self::Tgarch11 { omega, .. } => {
                let persistence = self.persistence().expect("GARCH-type");
                if persistence >= 1.0 {
                    return Err(Error::Nonstationary(format!(
                        "{} persistence {persistence} >= 1",
                        self.name()
                    )));
                }
                Ok(omega / (1.0 - persistence))
            }
        }
    }

    /// Rescales the intercept so the unconditional variance equals `target`.
    pub fn calibrate_omega(&self, target: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::InvalidParameter(format!("target variance {target}")));
        }
        let calibrated = match *self {
            Self::Constant { .. } => Self::Constant { sigma2: target },
            Self::Garch11 { alpha, beta, .. } => Self::Garch11 {
                omega: target * (1.0 - alpha - beta),
                alpha,
                beta,
            },
            Self::Tgarch11 { alpha, gamma, beta, .. } => Self::Tgarch11 {
                omega: target * (1.0 - alpha - 0.5 * gamma - beta),
                alpha,
                gamma,
                beta,
            },
            Self::RiskMetricsEwma { .. } => {
                return Err(Error::Unsupported(
                    "RiskMetrics EWMA has no intercept to calibrate".into(),
                ))
            }
        };
        // Surfaces nonstationarity (omega <= 0 after rescaling).
        calibrated.unconditional_variance()?;
        Ok(calibrated)
    }

    /// One step of the variance recursion.
    #[inline]
    pub fn next_variance(&self, sigma2: f64, shock: f64) -> f64 {
        let sq = shock * shock;
        match *self {
            Self::Constant { sigma2 } => sigma2,
            Self::Garch11 { omega, alpha, beta } => omega + alpha * sq + beta * sigma2,
            Self::Tgarch11 { omega, alpha, gamma, beta } => {
                let leverage = if shock < 0.0 { gamma * sq } else { 0.0 };
                omega + alpha * sq + leverage + beta * sigma2
            }
            Self::RiskMetricsEwma { lambda } => lambda * sigma2 + (1.0 - lambda) * sq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub label: String,
    pub vol: VolatilityModel,
    pub dist: InnovationDistribution,
}

impl ModelSpec {
    pub fn new(label: impl Into<String>, vol: VolatilityModel, dist: InnovationDistribution) -> Self {
        Self {
            label: label.into(),
            vol,
            dist,
        }
    }
}

/// A simulated return path.
///
/// `returns` and `sigma2_true` hold the `n` evaluation periods. The burn-in
/// returns are kept in `warmup_returns` so that competing models can run their
/// recursions over the same history the data-generating process saw.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPath {
    pub returns: Vec<f64>,
    pub sigma2_true: Vec<f64>,
    pub warmup_returns: Vec<f64>,
    /// Variance at the first burn-in step (the true unconditional variance).
    pub initial_sigma2: f64,
    pub seed: u64,
}

impl ReturnPath {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Writes `t,return,sigma2_true`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "return", "sigma2_true"])?;
        for (t, (r, s)) in self.returns.iter().zip(&self.sigma2_true).enumerate() {
            w.write_record([(t + 1).to_string(), r.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `burn_in + n` steps starting from the unconditional variance and
/// keeps the last `n`.
pub fn simulate_path(
    true_model: &ModelSpec,
    n: usize,
    burn_in: usize,
    stream: &mut Stream,
) -> Result<ReturnPath> {
    let vol = true_model.vol;
    let mut sigma2 = vol.unconditional_variance()?;
    let initial_sigma2 = sigma2;
    let sampler = true_model.dist.sampler();
    let mut warmup_returns = Vec::with_capacity(burn_in);
    let mut returns = Vec::with_capacity(n);
    let mut sigma2_true = Vec::with_capacity(n);
    for t in 0..burn_in + n {
        let r = sampler.sample(stream) * sigma2.sqrt();
        if t < burn_in {
            warmup_returns.push(r);
        } else {
            returns.push(r);
            sigma2_true.push(sigma2);
        }
        sigma2 = vol.next_variance(sigma2, r);
    }
    Ok(ReturnPath {
        returns,
        sigma2_true,
        warmup_returns,
        initial_sigma2,
        seed: stream.id(),
    })
}

/// Starting variance of a model's filter on `path`.
fn filter_start(vol: &VolatilityModel, path: &ReturnPath) -> Result<f64> {
    match vol {
        VolatilityModel::RiskMetricsEwma { .. } => Ok(path.initial_sigma2),
        other => other.unconditional_variance(),
    }
}

/// One-step-ahead conditional variances of `model` over the evaluation periods
/// of `path`.
///
/// The recursion starts at the first burn-in step, initialized at the model's
/// unconditional variance (RiskMetrics: the path's initial variance), and runs
/// over the burn-in returns before producing output.
pub fn filter_volatility(model: &ModelSpec, path: &ReturnPath) -> Result<Vec<f64>> {
    model.vol.validate()?;
    let vol = model.vol;
    let mut sigma2 = filter_start(&vol, path)?;
    for &r in &path.warmup_returns {
        sigma2 = vol.next_variance(sigma2, r);
    }
    let mut out = Vec::with_capacity(path.len());
    for &r in &path.returns {
        out.push(sigma2);
        sigma2 = vol.next_variance(sigma2, r);
    }
    Ok(out)
}
