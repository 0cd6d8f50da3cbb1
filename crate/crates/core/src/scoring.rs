//! Strictly consistent scoring functions.
//!
//! * Quantile forecasts: the homogeneous GPL family
//!   `L(x, y) = (1{y <= x} - p) (sgn(x)|x|^b - sgn(y)|y|^b) / b`, with the
//!   tick loss at `b = 1`.
//! * Joint VaR/ES forecasts: the Fissler–Ziegel family, evaluated from a
//!   quadruple `(G1, G2, cal_G2, a)`. Each parametrization is a row of data;
//!   there is a single evaluation routine.
//!
//! Exceedance indicators are `1{y <= x}` throughout.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::check_probability;
use crate::forecasting::ForecastSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLossSpec {
    p: f64,
    b: f64,
}

impl QuantileLossSpec {
    pub fn new(p: f64, b: f64) -> Result<Self> {
        check_probability(p)?;
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("GPL degree b = {b}")));
        }
        Ok(Self { p, b })
    }

    pub fn tick(p: f64) -> Result<Self> {
        Self::new(p, 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    Al,
    Nz,
    Fzg,
}

impl Parametrization {
    pub const ALL: [Parametrization; 3] = [Self::Al, Self::Nz, Self::Fzg];

    pub fn name(&self) -> &'static str {
        self.functions().name
    }

    fn functions(&self) -> &'static JointFunctions {
        match self {
            Self::Al => &AL,
            Self::Nz => &NZ,
            Self::Fzg => &FZG,
        }
    }
}

impl fmt::Display for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parametrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "al" => Ok(Self::Al),
            "nz" => Ok(Self::Nz),
            "fzg" => Ok(Self::Fzg),
            other => Err(Error::InvalidParameter(format!("unknown parametrization {other}"))),
        }
    }
}

/// One row of the joint-loss parametrization table. `cal_g2' = g2`.
struct JointFunctions {
    name: &'static str,
    g1: fn(f64) -> f64,
    g2: fn(f64) -> f64,
    cal_g2: fn(f64) -> f64,
    a: fn(f64, f64) -> f64,
    /// `g2`/`cal_g2` are only defined for negative ES arguments.
    negative_es: bool,
}

fn zero(_: f64) -> f64 {
    0.0
}

fn identity(x: f64) -> f64 {
    x
}

fn zero_a(_: f64, _: f64) -> f64 {
    0.0
}

static AL: JointFunctions = JointFunctions {
    name: "AL",
    g1: zero,
    g2: |x| -1.0 / x,
    cal_g2: |x| -(-x).ln(),
    a: |_, p| 1.0 - (1.0 - p).ln(),
    negative_es: true,
};

static NZ: JointFunctions = JointFunctions {
    name: "NZ",
    g1: zero,
    g2: |x| 0.5 / (-x).sqrt(),
    cal_g2: |x| -(-x).sqrt(),
    a: zero_a,
    negative_es: true,
};

static FZG: JointFunctions = JointFunctions {
    name: "FZG",
    g1: identity,
    // logistic(x) and softplus(x), written to avoid overflow for large |x|
    g2: |x| {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    },
    cal_g2: |x| x.max(0.0) + (-x.abs()).exp().ln_1p(),
    a: zero_a,
    negative_es: false,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLossSpec {
    p: f64,
    parametrization: Parametrization,
}

impl JointLossSpec {
    pub fn new(p: f64, parametrization: Parametrization) -> Result<Self> {
        check_probability(p)?;
        Ok(Self { p, parametrization })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn parametrization(&self) -> Parametrization {
        self.parametrization
    }
}

#[inline]
fn signed_power(x: f64, b: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if b == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(b)
    }
}

/// Homogeneous GPL loss of quantile forecast `x` for realization `y`.
#[inline]
pub fn gpl_loss(spec: &QuantileLossSpec, x: f64, y: f64) -> f64 {
    let hit = if y <= x { 1.0 } else { 0.0 };
    (hit - spec.p) * (signed_power(x, spec.b) - signed_power(y, spec.b)) / spec.b
}

/// Fissler–Ziegel loss of the forecast pair `(x1, x2) = (VaR, ES)`.
pub fn joint_loss(spec: &JointLossSpec, x1: f64, x2: f64, y: f64) -> Result<f64> {
    let f = spec.parametrization.functions();
    if f.negative_es && !(x2 < 0.0) {
        return Err(Error::EsDomain {
            parametrization: f.name,
            es: x2,
        });
    }
    let p = spec.p;
    let hit = if y <= x1 { 1.0 } else { 0.0 };
    Ok((hit - p) * (f.g1)(x1) - hit * (f.g1)(y)
        + (f.g2)(x2) * (x2 - x1 + hit * (x1 - y) / p)
        - (f.cal_g2)(x2)
        + (f.a)(y, p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoringSpec {
    Quantile(QuantileLossSpec),
    Joint(JointLossSpec),
}

impl ScoringSpec {
    pub fn p(&self) -> f64 {
        match self {
            Self::Quantile(s) => s.p,
            Self::Joint(s) => s.p,
        }
    }

    /// Same rule at a different level.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Ok(match self {
            Self::Quantile(s) => Self::Quantile(QuantileLossSpec::new(p, s.b)?),
            Self::Joint(s) => Self::Joint(JointLossSpec::new(p, s.parametrization)?),
        })
    }

    pub fn needs_es(&self) -> bool {
        matches!(self, Self::Joint(_))
    }

    /// Short family name used in reports: `gpl`, `al`, `nz` or `fzg`.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Quantile(_) => "gpl",
            Self::Joint(j) => match j.parametrization {
                Parametrization::Al => "al",
                Parametrization::Nz => "nz",
                Parametrization::Fzg => "fzg",
            },
        }
    }

    /// The GPL degree, or the parametrization name.
    pub fn parameter(&self) -> String {
        match self {
            Self::Quantile(s) => s.b.to_string(),
            Self::Joint(s) => s.parametrization.name().to_string(),
        }
    }

    /// Loss of one forecast; `es` is ignored by quantile rules.
    #[inline]
    pub fn evaluate(&self, var: f64, es: f64, y: f64) -> Result<f64> {
        match self {
            Self::Quantile(s) => Ok(gpl_loss(s, var, y)),
            Self::Joint(s) => joint_loss(s, var, es, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSeries {
    pub values: Vec<f64>,
    pub spec: ScoringSpec,
    pub model_label: String,
}

impl LossSeries {
    /// Global out-of-sample loss.
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn loss_series(
    spec: &ScoringSpec,
    forecasts: &ForecastSeries,
    realizations: &[f64],
) -> Result<LossSeries> {
    if forecasts.len() != realizations.len() {
        return Err(Error::LengthMismatch {
            left: forecasts.len(),
            right: realizations.len(),
        });
    }
    let values = match (spec, &forecasts.es) {
        (ScoringSpec::Quantile(s), _) => forecasts
            .var
            .iter()
            .zip(realizations)
            .map(|(&x, &y)| gpl_loss(s, x, y))
            .collect(),
        (ScoringSpec::Joint(s), Some(es)) => forecasts
            .var
            .iter()
            .zip(es)
            .zip(realizations)
            .map(|((&x1, &x2), &y)| joint_loss(s, x1, x2, y))
            .collect::<Result<_>>()?,
        (ScoringSpec::Joint(_), None) => {
            return Err(Error::MissingEs(forecasts.model_label.clone()))
        }
    };
    Ok(LossSeries {
        values,
        spec: *spec,
        model_label: forecasts.model_label.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossDifferential {
    pub values: Vec<f64>,
    pub labels: (String, String),
}

impl LossDifferential {
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

/// `d_t = a_t - b_t`.
pub fn differential(a: &LossSeries, b: &LossSeries) -> Result<LossDifferential> {
    if a.spec != b.spec {
        return Err(Error::SpecMismatch);
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(LossDifferential {
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        labels: (a.model_label.clone(), b.model_label.clone()),
    })
}

/// Writes losses in long format, `t,model_label,loss`, model by model.
pub fn write_losses_csv<W: Write>(series: &[LossSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "model_label", "loss"])?;
    for s in series {
        for (t, v) in s.values.iter().enumerate() {
            w.write_record([(t + 1).to_string(), s.model_label.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
