//! One-day-ahead VaR and ES forecast series.
//!
//! Forecasts follow the left-tail sign convention: both VaR and ES are
//! negative numbers for small `p`, with `es < var`.

use std::io::Write;

use crate::dgp::ModelSpec;
use crate::distributions::{check_probability, InnovationDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    /// Level the forecasts were produced at.
    pub p: f64,
    pub var: Vec<f64>,
    pub es: Option<Vec<f64>>,
    pub model_label: String,
}

impl ForecastSeries {
    pub fn len(&self) -> usize {
        self.var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.var.is_empty()
    }

    /// Writes `t,var,es,model_label,p`; `es` is empty when absent.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "var", "es", "model_label", "p"])?;
        for (t, v) in self.var.iter().enumerate() {
            let es = self
                .es
                .as_ref()
                .map(|e| e[t].to_string())
                .unwrap_or_default();
            w.write_record([
                (t + 1).to_string(),
                v.to_string(),
                es,
                self.model_label.clone(),
                self.p.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scales the unit-variance quantile (and ES) by each filtered volatility.
pub fn dynamic_forecasts(
    model: &ModelSpec,
    sigma2: &[f64],
    p: f64,
    with_es: bool,
) -> Result<ForecastSeries> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Probability(p));
    }
    let q = model.dist.quantile(p)?;
    let var = sigma2.iter().map(|s| s.sqrt() * q).collect();
    let es = if with_es {
        let e = model.dist.expected_shortfall(p)?;
        Some(sigma2.iter().map(|s| s.sqrt() * e).collect())
    } else {
        None
    };
    Ok(ForecastSeries {
        p,
        var,
        es,
        model_label: model.label.clone(),
    })
}

/// Constant forecasts of the unit-variance distribution's VaR and ES.
pub fn static_forecast(dist: &InnovationDistribution, p: f64, n: usize) -> Result<ForecastSeries> {
    check_probability(p)?;
    let q = dist.quantile(p)?;
    let e = dist.expected_shortfall(p)?;
    Ok(ForecastSeries {
        p,
        var: vec![q; n],
        es: Some(vec![e; n]),
        model_label: dist.to_string(),
    })
}

/// Constant forecasts reported at the wrong level `p_star`.
pub fn misreported_forecast(
    dist: &InnovationDistribution,
    p_star: f64,
    n: usize,
) -> Result<ForecastSeries> {
    let mut f = static_forecast(dist, p_star, n)?;
    f.model_label = format!("{dist}@p*={p_star}");
    Ok(f)
}
