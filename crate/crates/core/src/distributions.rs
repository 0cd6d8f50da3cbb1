//! Innovation distributions with zero mean and unit variance.
//!
//! The standardized Student-t is the classical `t_nu` variate multiplied by
//! `sqrt((nu - 2) / nu)`. Quantiles come from the inverse regularized
//! incomplete beta function and are polished by Newton steps on the CDF.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::function::{beta, erf, gamma};

use crate::quad;
use crate::{Error, Result};

const NEWTON_STEPS: usize = 3;
/// Intervals narrower than this are integrated directly rather than through
/// differences of closed-form antiderivatives, which cancel badly.
const SHORT_INTERVAL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationDistribution {
    StandardNormal,
    StandardizedStudentT { nu: f64 },
}

impl fmt::Display for InnovationDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StandardNormal => write!(f, "n"),
            Self::StandardizedStudentT { nu } => write!(f, "t({nu})"),
        }
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Probability(p))
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl InnovationDistribution {
    /// Unit-variance Student-t with `nu > 2` degrees of freedom.
    pub fn standardized_t(nu: f64) -> Result<Self> {
        if nu > 2.0 && nu.is_finite() {
            Ok(Self::StandardizedStudentT { nu })
        } else {
            Err(Error::InvalidParameter(format!(
                "standardized Student-t needs nu > 2, got {nu}"
            )))
        }
    }

    /// `sqrt((nu - 2) / nu)` for the t family, 1 for the normal.
    fn scale(&self) -> f64 {
        match *self {
            Self::StandardNormal => 1.0,
            Self::StandardizedStudentT { nu } => ((nu - 2.0) / nu).sqrt(),
        }
    }

    fn classical_t_pdf(nu: f64, t: f64) -> f64 {
        let log_norm = gamma::ln_gamma(0.5 * (nu + 1.0))
            - gamma::ln_gamma(0.5 * nu)
            - 0.5 * (nu * PI).ln();
        (log_norm - 0.5 * (nu + 1.0) * (1.0 + t * t / nu).ln()).exp()
    }

    fn classical_t_cdf(nu: f64, t: f64) -> f64 {
        if t == 0.0 {
            return 0.5;
        }
        let tail = 0.5 * beta::beta_reg(0.5 * nu, 0.5, nu / (nu + t * t));
        if t < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match *self {
            Self::StandardNormal => normal_pdf(z),
            Self::StandardizedStudentT { nu } => {
                let s = self.scale();
                Self::classical_t_pdf(nu, z / s) / s
            }
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        match *self {
            Self::StandardNormal => 0.5 * erf::erfc(-z / SQRT_2),
            Self::StandardizedStudentT { nu } => Self::classical_t_cdf(nu, z / self.scale()),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        if p == 0.5 {
            return Ok(0.0);
        }
        let start = match *self {
            Self::StandardNormal => -SQRT_2 * erf::erfc_inv(2.0 * p),
            Self::StandardizedStudentT { nu } => {
                let tail = p.min(1.0 - p);
                let x = beta::inv_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
                let t = (nu * (1.0 - x) / x).sqrt();
                let t = if p < 0.5 { -t } else { t };
                t * self.scale()
            }
        };
        let mut z = start;
        for _ in 0..NEWTON_STEPS {
            let density = self.pdf(z);
            if density <= 0.0 {
                break;
            }
            let step = (self.cdf(z) - p) / density;
            if !step.is_finite() {
                break;
            }
            z -= step;
        }
        Ok(z)
    }

    /// `E[Z 1{Z <= x}]`, the lower partial first moment.
    pub fn partial_mean(&self, x: f64) -> f64 {
        match *self {
            Self::StandardNormal => -normal_pdf(x),
            Self::StandardizedStudentT { nu } => {
                let s = self.scale();
                let t = x / s;
                -s * (nu + t * t) / (nu - 1.0) * Self::classical_t_pdf(nu, t)
            }
        }
    }

    /// Left-tail expected shortfall `(1/p) * int_0^p VaR_u du`; more negative
    /// than the quantile for `p < 0.5`.
    pub fn expected_shortfall(&self, p: f64) -> Result<f64> {
        let q = self.quantile(p)?;
        Ok(self.partial_mean(q) / p)
    }

    /// `E[Z | a <= Z < b]`.
    pub fn truncated_mean(&self, a: f64, b: f64) -> Result<f64> {
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::Interval { lo: a, hi: b });
        }
        let (num, mass) = if a.is_finite() && b.is_finite() && b - a < SHORT_INTERVAL {
            let num = quad::kronrod(|z| z * self.pdf(z), a, b);
            let mass = quad::kronrod(|z| self.pdf(z), a, b);
            (num, mass)
        } else {
            (
                self.partial_mean(b) - self.partial_mean(a),
                self.cdf(b) - self.cdf(a),
            )
        };
        if !(mass > f64::MIN_POSITIVE) {
            return Err(Error::DegenerateInterval { lo: a, hi: b });
        }
        Ok((num / mass).clamp(a, b))
    }

    /// A reusable sampler; avoids rebuilding the t machinery per draw.
    pub fn sampler(&self) -> InnovationSampler {
        match *self {
            Self::StandardNormal => InnovationSampler::Normal,
            Self::StandardizedStudentT { nu } => InnovationSampler::StudentT {
                t: StudentT::new(nu).expect("nu > 2 validated at construction"),
                scale: self.scale(),
            },
        }
    }

    /// `n` independent draws from `stream`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, stream: &mut R) -> Vec<f64> {
        let sampler = self.sampler();
        (0..n).map(|_| sampler.sample(stream)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum InnovationSampler {
    Normal,
    StudentT { t: StudentT<f64>, scale: f64 },
}

impl Distribution<f64> for InnovationSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Normal => rng.sample(StandardNormal),
            Self::StudentT { t, scale } => scale * t.sample(rng),
        }
    }
}
