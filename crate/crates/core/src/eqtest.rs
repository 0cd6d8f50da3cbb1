//! Two-sided Diebold–Mariano test of equal predictive ability.
//!
//! `t = mean(d) / sqrt(var_hat(mean(d)))` is compared with standard normal
//! critical values. The variance of the mean comes either from the iid sample
//! variance or from a moving block bootstrap.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::{erf, gamma};

use crate::bootstrap::{prefix_sums, MovingBlockBootstrap};
use crate::rng::Stream;
use crate::scoring::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceEstimator {
    IidSample,
    MovingBlockBootstrap { resamples: usize, block_length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmOutcome {
    pub statistic: f64,
    pub pvalue: f64,
    pub reject: bool,
    pub dbar_sign: i8,
    pub mean: f64,
    /// Estimated variance of the mean differential.
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    Power,
    TypeIII,
    NoRejection,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Two-sided standard normal p-value.
pub fn two_sided_pvalue(statistic: f64) -> f64 {
    erf::erfc(statistic.abs() / SQRT_2)
}

/// A variance is treated as zero when it is at rounding level relative to the
/// size of the data (a differential that is constant up to floating-point
/// noise).
pub(crate) fn is_degenerate(variance: f64, scale: f64) -> bool {
    !(variance > (1e-13 * scale).powi(2)) || !variance.is_finite()
}

fn max_abs(d: &[f64]) -> f64 {
    d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Estimated variance of the mean of `d`.
pub fn mean_variance(d: &[f64], est: VarianceEstimator, stream: &mut Stream) -> Result<f64> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 periods, got {n}")));
    }
    let dbar = mean(d);
    match est {
        VarianceEstimator::IidSample => {
            let ss: f64 = d.iter().map(|v| (v - dbar) * (v - dbar)).sum();
            Ok(ss / (n - 1) as f64 / n as f64)
        }
        VarianceEstimator::MovingBlockBootstrap {
            resamples,
            block_length,
        } => {
            if resamples == 0 {
                return Err(Error::InvalidParameter("zero bootstrap resamples".into()));
            }
            let mbb = MovingBlockBootstrap::new(n, block_length)?;
            let prefix = prefix_sums(d);
            let mut starts = Vec::new();
            let mut acc = 0.0;
            for _ in 0..resamples {
                mbb.draw_starts(stream, &mut starts);
                let dev = mbb.resampled_mean(&prefix, &starts) - dbar;
                acc += dev * dev;
            }
            Ok(acc / resamples as f64)
        }
    }
}

/// Diebold–Mariano test of `E[d_t] = 0` at level `alpha`.
pub fn dm_test(
    d: &[f64],
    alpha: f64,
    est: VarianceEstimator,
    stream: &mut Stream,
) -> Result<DmOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("test level {alpha}")));
    }
    let variance = mean_variance(d, est, stream)?;
    let dbar = mean(d);
    let scale = max_abs(d) / (d.len() as f64).sqrt();
    if is_degenerate(variance, scale) {
        return Err(Error::DegenerateDifferential(format!(
            "mean {dbar} over {} periods",
            d.len()
        )));
    }
    let statistic = dbar / variance.sqrt();
    let pvalue = two_sided_pvalue(statistic);
    Ok(DmOutcome {
        statistic,
        pvalue,
        reject: pvalue < alpha,
        dbar_sign: sign(dbar),
        mean: dbar,
        variance,
    })
}

/// Power if the test rejects with the sign of the true expected differential,
/// type III error if it rejects with any other sign (including a zero mean).
pub fn classify(outcome: &DmOutcome, true_mu_sign: i8) -> Classification {
    if !outcome.reject {
        Classification::NoRejection
    } else if outcome.dbar_sign == true_mu_sign && true_mu_sign != 0 {
        Classification::Power
    } else {
        Classification::TypeIII
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Degrees of freedom of a maximum-likelihood location-scale t fit.
    pub fitted_df: f64,
    pub fitted_location: f64,
    pub fitted_scale: f64,
}

const MIN_REPLICATIONS: usize = 100;
const DF_RANGE: (f64, f64) = (0.2, 1000.0);

/// Moments of replicated statistics plus a location-scale Student-t fit.
/// Non-finite values are ignored.
pub fn statistic_distribution(stats: &[f64]) -> Result<StatisticSummary> {
    let x: Vec<f64> = stats.iter().copied().filter(|v| v.is_finite()).collect();
    let n = x.len();
    if n < MIN_REPLICATIONS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_REPLICATIONS} finite statistics, got {n}"
        )));
    }
    let m = mean(&x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n as f64;
    let variance = m2 * n as f64 / (n - 1) as f64;
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let fit = fit_location_scale_t(&x);
    Ok(StatisticSummary {
        count: n,
        mean: m,
        variance,
        skewness,
        fitted_df: fit.df,
        fitted_location: fit.location,
        fitted_scale: fit.scale,
    })
}

#[derive(Debug, Clone, Copy)]
struct TFit {
    df: f64,
    location: f64,
    scale: f64,
    loglik: f64,
}

/// EM iterations for location and scale at fixed degrees of freedom.
fn fit_at_df(x: &[f64], df: f64, start: (f64, f64)) -> TFit {
    let n = x.len() as f64;
    let (mut mu, mut s2) = (start.0, start.1.max(1e-300));
    for _ in 0..500 {
        let (mut sw, mut swx) = (0.0, 0.0);
        for &v in x {
            let w = (df + 1.0) / (df + (v - mu).powi(2) / s2);
            sw += w;
            swx += w * v;
        }
        let mu_new = swx / sw;
        let s2_new = x
            .iter()
            .map(|&v| {
                let r2 = (v - mu_new).powi(2);
                (df + 1.0) / (df + r2 / s2) * r2
            })
            .sum::<f64>()
            / n;
        let done = (mu_new - mu).abs() < 1e-10 * (1.0 + mu.abs())
            && (s2_new - s2).abs() < 1e-10 * s2;
        mu = mu_new;
        s2 = s2_new.max(1e-300);
        if done {
            break;
        }
    }
    let scale = s2.sqrt();
    let log_norm =
        gamma::ln_gamma(0.5 * (df + 1.0)) - gamma::ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
    let loglik = x
        .iter()
        .map(|&v| {
            let r = (v - mu) / scale;
            log_norm - scale.ln() - 0.5 * (df + 1.0) * (r * r / df).ln_1p()
        })
        .sum();
    TFit {
        df,
        location: mu,
        scale,
        loglik,
    }
}

fn fit_location_scale_t(x: &[f64]) -> TFit {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let q1 = sorted[sorted.len() / 4];
    let q3 = sorted[3 * sorted.len() / 4];
    let start = (median, ((q3 - q1) / 1.35).powi(2).max(1e-12));

    // Coarse log-spaced grid, then golden-section refinement on log(df).
    let (lo, hi) = (DF_RANGE.0.ln(), DF_RANGE.1.ln());
    let grid = 41;
    let at = |u: f64| fit_at_df(x, u.exp(), start);
    let fits: Vec<TFit> = (0..grid)
        .map(|k| at(lo + (hi - lo) * k as f64 / (grid - 1) as f64))
        .collect();
    let best = (0..grid)
        .max_by(|&a, &b| fits[a].loglik.total_cmp(&fits[b].loglik))
        .expect("nonempty grid");
    let step = (hi - lo) / (grid - 1) as f64;
    let (mut a, mut b) = (
        lo + step * best.saturating_sub(1) as f64,
        lo + step * (best + 1).min(grid - 1) as f64,
    );
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (at(c), at(d));
    for _ in 0..40 {
        if fc.loglik > fd.loglik {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = at(d);
        }
    }
    [fits[best], fc, fd]
        .into_iter()
        .max_by(|p, q| p.loglik.total_cmp(&q.loglik))
        .expect("nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::InnovationDistribution;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal, StudentT};

    fn normal_draws(n: usize, mu: f64, seed: u64) -> Vec<f64> {
        let mut s = Stream::from_seed(seed);
        let dist = Normal::new(mu, 1.0).unwrap();
        (0..n).map(|_| dist.sample(&mut s)).collect()
    }

    #[test]
    fn constant_differential_is_degenerate() {
        let mut s = Stream::from_seed(0);
        for c in [0.3, -1e-3, 7.0] {
            let d = vec![c; 250];
            assert!(matches!(
                dm_test(&d, 0.05, VarianceEstimator::IidSample, &mut s),
                Err(Error::DegenerateDifferential(_))
            ));
            let mbb = VarianceEstimator::MovingBlockBootstrap { resamples: 50, block_length: 5 };
            assert!(matches!(
                dm_test(&d, 0.05, mbb, &mut s),
                Err(Error::DegenerateDifferential(_))
            ));
        }
    }

    #[test]
    fn shifted_mean_is_rejected() {
        let d = normal_draws(10_000, 0.5, 1);
        let out = dm_test(&d, 0.05, VarianceEstimator::IidSample, &mut Stream::from_seed(0)).unwrap();
        assert!(out.reject);
        assert_eq!(out.dbar_sign, 1);
        assert!((out.statistic - 50.0).abs() < 5.0, "t = {}", out.statistic);
        assert_eq!(classify(&out, 1), Classification::Power);
        assert_eq!(classify(&out, -1), Classification::TypeIII);
    }

    #[test]
    fn no_rejection_regardless_of_sign() {
        let out = DmOutcome {
            statistic: 0.4,
            pvalue: 0.69,
            reject: false,
            dbar_sign: -1,
            mean: -0.1,
            variance: 0.0625,
        };
        assert_eq!(classify(&out, 1), Classification::NoRejection);
        assert_eq!(classify(&out, -1), Classification::NoRejection);
        let zero = DmOutcome { reject: true, dbar_sign: 0, ..out };
        assert_eq!(classify(&zero, 1), Classification::TypeIII);
    }

    #[test]
    fn antisymmetry_under_negation() {
        let d = normal_draws(400, 0.1, 2);
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        for est in [
            VarianceEstimator::IidSample,
            VarianceEstimator::MovingBlockBootstrap { resamples: 500, block_length: 8 },
        ] {
            let a = dm_test(&d, 0.05, est, &mut Stream::from_seed(3)).unwrap();
            let b = dm_test(&neg, 0.05, est, &mut Stream::from_seed(3)).unwrap();
            assert_abs_diff_eq!(a.statistic, -b.statistic, epsilon = 1e-12);
            assert_abs_diff_eq!(a.pvalue, b.pvalue, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_block_bootstrap_matches_iid_variance() {
        let d = normal_draws(2000, 0.0, 5);
        let mut s = Stream::from_seed(6);
        let iid = mean_variance(&d, VarianceEstimator::IidSample, &mut s).unwrap();
        let boot = mean_variance(
            &d,
            VarianceEstimator::MovingBlockBootstrap { resamples: 20_000, block_length: 1 },
            &mut s,
        )
        .unwrap();
        assert!((boot / iid - 1.0).abs() < 0.05, "{boot} vs {iid}");
    }

    #[test]
    fn argument_validation() {
        let mut s = Stream::from_seed(0);
        assert!(dm_test(&[1.0], 0.05, VarianceEstimator::IidSample, &mut s).is_err());
        assert!(dm_test(&[1.0, 2.0], 1.5, VarianceEstimator::IidSample, &mut s).is_err());
        let bad = VarianceEstimator::MovingBlockBootstrap { resamples: 0, block_length: 1 };
        assert!(dm_test(&[1.0, 2.0], 0.05, bad, &mut s).is_err());
    }

    #[test]
    fn pvalue_reference() {
        assert_abs_diff_eq!(two_sided_pvalue(1.959_963_984_540_054), 0.05, epsilon = 1e-10);
        assert_eq!(two_sided_pvalue(0.0), 1.0);
    }

    #[test]
    fn summary_of_normal_statistics() {
        let x = normal_draws(5000, 0.0, 8);
        let s = statistic_distribution(&x).unwrap();
        assert!(s.skewness.abs() < 0.1);
        assert!(s.fitted_df > 30.0, "df = {}", s.fitted_df);
        assert!(statistic_distribution(&x[..50]).is_err());
    }

    #[test]
    fn t_fit_recovers_degrees_of_freedom() {
        let mut s = Stream::from_seed(9);
        let t = StudentT::new(3.0).unwrap();
        let x: Vec<f64> = (0..20_000).map(|_| 2.0 + 0.5 * t.sample(&mut s)).collect();
        let fit = statistic_distribution(&x).unwrap();
        assert!((fit.fitted_df - 3.0).abs() < 0.4, "df = {}", fit.fitted_df);
        assert!((fit.fitted_location - 2.0).abs() < 0.02);
        assert!((fit.fitted_scale - 0.5).abs() < 0.02);
        // keep the unit-variance family in view: its draws are not normal
        let z = InnovationDistribution::standardized_t(4.0).unwrap().sample(5000, &mut s);
        assert!(statistic_distribution(&z).unwrap().fitted_df < 10.0);
    }
}
