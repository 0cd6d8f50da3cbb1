//! Ground truth: expected losses, expected loss differentials and true model
//! rankings.
//!
//! Static expectations are evaluated in closed form (tick loss) or by
//! quadrature against the true innovation density. Dynamic rankings come from
//! one long simulated path on which every competing model is filtered online.

use std::io::Write;

use rayon::prelude::*;
use rand_distr::Distribution;

use crate::dgp::{ModelSpec, VolatilityModel, DEFAULT_BURN_IN};
use crate::distributions::{check_probability, InnovationDistribution};
use crate::quad::{integrate_pieces, ORACLE_TOL};
use crate::rng::Stream;
use crate::scoring::{gpl_loss, QuantileLossSpec, ScoringSpec};
use crate::{Error, Result};

/// Default length of the long path used for dynamic rankings.
pub const DEFAULT_LONG_RUN: usize = 10_000_000;
const BATCHES: usize = 100;
/// Expected-loss gaps must exceed this multiple of their standard error.
const GAP_TO_STDERR: f64 = 5.0;

/// `E[L(x, Z)]` for the tick loss at level `p`: `x (F(x) - p) - E[Z 1{Z <= x}]`.
pub fn expected_tick_loss(dist: &InnovationDistribution, x: f64, p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(x * (dist.cdf(x) - p) - dist.partial_mean(x))
}

/// `E[L(q1, Z) - L(q2, Z)]` for the tick loss when `q1` is the true
/// `p`-quantile: `-(q2 - E[Z | between q1 and q2]) (F(q2) - p)`.
///
/// The same expression holds for `q2 < q1`, with the conditional mean taken
/// over `[q2, q1)`.
pub fn expected_tick_diff_static(
    dist: &InnovationDistribution,
    q1: f64,
    q2: f64,
    p: f64,
) -> Result<f64> {
    check_probability(p)?;
    if !q1.is_finite() || !q2.is_finite() {
        return Err(Error::InvalidParameter(format!("forecasts {q1}, {q2}")));
    }
    if q1 == q2 {
        return Ok(0.0);
    }
    let cm = dist.truncated_mean(q1.min(q2), q1.max(q2))?;
    Ok(-(q2 - cm) * (dist.cdf(q2) - p))
}

/// Probability that a single tick-loss differential favours the smaller
/// forecast `x1`: `F(x2 - p (x2 - x1))`.
pub fn prob_correct_sign(dist: &InnovationDistribution, x1: f64, x2: f64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if x1 > x2 {
        return Err(Error::InvalidParameter(format!(
            "expected x1 <= x2, got {x1} > {x2}"
        )));
    }
    Ok(dist.cdf(x2 - p * (x2 - x1)))
}

/// Conditional expected tick differential under distributional
/// misspecification: `sigma_t` times the static value.
pub fn expected_diff_dynamic(
    sigma_t: f64,
    dist: &InnovationDistribution,
    q1: f64,
    q2: f64,
    p: f64,
) -> Result<f64> {
    if !(sigma_t > 0.0) {
        return Err(Error::InvalidParameter(format!("volatility {sigma_t}")));
    }
    Ok(sigma_t * expected_tick_diff_static(dist, q1, q2, p)?)
}

/// Expected tick differential per unit of true volatility when model 2 uses
/// volatility `c * sigma_t`, from the explicit loss difference
/// `L(q, z) - L(c q, z)` integrated against the density.
pub fn expected_diff_vol_misspec(dist: &InnovationDistribution, p: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("volatility ratio {c}")));
    }
    let spec = QuantileLossSpec::tick(p)?;
    let q = dist.quantile(p)?;
    if c == 1.0 {
        return Ok(0.0);
    }
    let cq = c * q;
    let (lo, hi) = (q.min(cq), q.max(cq));
    let integrand = |z: f64| (gpl_loss(&spec, q, z) - gpl_loss(&spec, cq, z)) * dist.pdf(z);
    Ok(integrate_pieces(
        integrand,
        &[f64::NEG_INFINITY, lo, hi, f64::INFINITY],
        ORACLE_TOL,
    ))
}

/// `var(L_i - mean_j L_j)` from the loss covariance matrix, via the expansion
/// into variances and covariances.
pub fn variance_of_centered_differential(cov: &[Vec<f64>], i: usize) -> Result<f64> {
    let m = cov.len();
    if m < 2 || i >= m || cov.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidParameter(format!(
            "index {i} into a {m}x{m} covariance"
        )));
    }
    check_psd(cov)?;
    let mf = m as f64;
    let m2 = mf * mf;
    let others = || (0..m).filter(move |&j| j != i);
    let own = ((mf - 1.0) / mf).powi(2) * cov[i][i];
    let var_others: f64 = others().map(|j| cov[j][j]).sum::<f64>() / m2;
    let cov_others: f64 = others()
        .flat_map(|j| others().filter(move |&k| k > j).map(move |k| (j, k)))
        .map(|(j, k)| cov[j][k])
        .sum::<f64>()
        * 2.0
        / m2;
    let cov_own: f64 = others().map(|j| cov[i][j]).sum::<f64>() * 2.0 * (mf - 1.0) / m2;
    Ok(own + var_others + cov_others - cov_own)
}

/// Symmetry plus a Cholesky factorization of `cov + delta I`, with `delta`
/// at rounding level of the diagonal.
fn check_psd(cov: &[Vec<f64>]) -> Result<()> {
    let m = cov.len();
    let scale = (0..m).fold(0.0f64, |a, k| a.max(cov[k][k].abs()));
    for r in 0..m {
        for c in 0..m {
            if !cov[r][c].is_finite() || (cov[r][c] - cov[c][r]).abs() > 1e-12 * scale.max(1e-300) {
                return Err(Error::InvalidParameter("covariance is not symmetric".into()));
            }
        }
    }
    let delta = 1e-10 * scale.max(1e-300);
    let mut l = vec![vec![0.0; m]; m];
    for r in 0..m {
        for c in 0..=r {
            let s: f64 = (0..c).map(|k| l[r][k] * l[c][k]).sum();
            if r == c {
                let d = cov[r][r] + delta - s;
                if !(d > 0.0) {
                    return Err(Error::InvalidParameter(
                        "covariance is not positive semidefinite".into(),
                    ));
                }
                l[r][r] = d.sqrt();
            } else {
                l[r][c] = (cov[r][c] - s) / l[c][c];
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    ClosedForm,
    Quadrature,
    LongRunSimulation { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingOracle {
    pub labels: Vec<String>,
    pub expected_losses: Vec<f64>,
    /// Standard error of each expected loss; zero for exact evaluations.
    pub stderr: Vec<f64>,
    /// Indices attaining the minimum expected loss.
    pub best_set: Vec<usize>,
    pub method: OracleMethod,
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

impl RankingOracle {
    fn from_losses(
        labels: Vec<String>,
        expected_losses: Vec<f64>,
        stderr: Vec<f64>,
        method: OracleMethod,
    ) -> Self {
        let min = expected_losses.iter().copied().fold(f64::INFINITY, f64::min);
        let best_set = (0..expected_losses.len())
            .filter(|&i| tied(expected_losses[i], min))
            .collect();
        Self {
            labels,
            expected_losses,
            stderr,
            best_set,
            method,
        }
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// 1 for the best model; tied models share a rank.
    pub fn rank(&self, i: usize) -> usize {
        let mu = self.expected_losses[i];
        1 + self
            .expected_losses
            .iter()
            .filter(|&&o| o < mu && !tied(o, mu))
            .count()
    }

    pub fn is_best(&self, i: usize) -> bool {
        self.best_set.contains(&i)
    }

    /// Sign of `mu_ij = E[L_i] - E[L_j]`; 0 for ties.
    pub fn mu_sign(&self, i: usize, j: usize) -> i8 {
        let (a, b) = (self.expected_losses[i], self.expected_losses[j]);
        if tied(a, b) {
            0
        } else if a < b {
            -1
        } else {
            1
        }
    }

    /// Appends `scenario,model_label,expected_loss,rank,stderr` rows.
    pub fn write_rows<W: Write>(&self, scenario: &str, w: &mut csv::Writer<W>) -> Result<()> {
        for (i, l) in self.labels.iter().enumerate() {
            w.write_record([
                scenario.to_string(),
                l.clone(),
                self.expected_losses[i].to_string(),
                self.rank(i).to_string(),
                self.stderr[i].to_string(),
            ])?;
        }
        Ok(())
    }
}

/// Header of the oracle report.
pub const ORACLE_CSV_HEADER: [&str; 5] = ["scenario", "model_label", "expected_loss", "rank", "stderr"];

#[derive(Debug, Clone, PartialEq)]
pub struct StaticForecast {
    pub label: String,
    pub var: f64,
    pub es: f64,
}

/// `E[S(var, es, Z)]` with `Z` drawn from `dist`.
pub fn expected_static_loss(
    dist: &InnovationDistribution,
    forecast: &StaticForecast,
    scoring: &ScoringSpec,
) -> Result<f64> {
    if let ScoringSpec::Quantile(q) = scoring {
        if q.b() == 1.0 {
            return expected_tick_loss(dist, forecast.var, q.p());
        }
    }
    // Surface domain errors before integrating.
    scoring.evaluate(forecast.var, forecast.es, 0.0)?;
    let mut points = vec![f64::NEG_INFINITY, forecast.var, 0.0, f64::INFINITY];
    points.sort_by(f64::total_cmp);
    points.dedup();
    let integrand = |y: f64| {
        scoring
            .evaluate(forecast.var, forecast.es, y)
            .expect("domain checked")
            * dist.pdf(y)
    };
    Ok(integrate_pieces(integrand, &points, ORACLE_TOL))
}

/// Ranks constant forecasts of iid returns drawn from `truth`.
pub fn rank_static(
    truth: &InnovationDistribution,
    forecasts: &[StaticForecast],
    scoring: &ScoringSpec,
) -> Result<RankingOracle> {
    if forecasts.is_empty() {
        return Err(Error::InvalidParameter("no models to rank".into()));
    }
    let method = match scoring {
        ScoringSpec::Quantile(q) if q.b() == 1.0 => OracleMethod::ClosedForm,
        _ => OracleMethod::Quadrature,
    };
    let losses = forecasts
        .iter()
        .map(|f| expected_static_loss(truth, f, scoring))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingOracle::from_losses(
        forecasts.iter().map(|f| f.label.clone()).collect(),
        losses,
        vec![0.0; forecasts.len()],
        method,
    ))
}

/// Per-model state of the online filter.
struct Tracker {
    vol: VolatilityModel,
    sigma2: f64,
    /// Unit-variance VaR and ES per scoring rule.
    quantiles: Vec<(f64, f64)>,
    /// `[rule][batch]` loss sums.
    sums: Vec<Vec<f64>>,
}

/// Ranks `models` on one long path simulated from `truth`, for every rule in
/// `scorings` at once.
///
/// Models sharing the true volatility recursion are ranked exactly under GPL
/// rules: their losses scale as `sigma_t^b` times a static expectation. All
/// other comparisons rely on the simulated means, whose paired standard error
/// (from batch means) against the best model must be below a fifth of the gap.
pub fn rank_dynamic(
    truth: &ModelSpec,
    models: &[ModelSpec],
    scorings: &[ScoringSpec],
    n: usize,
    seed: u64,
) -> Result<Vec<RankingOracle>> {
    if models.is_empty() || scorings.is_empty() {
        return Err(Error::InvalidParameter("no models or rules to rank".into()));
    }
    if n < BATCHES * 10 {
        return Err(Error::InvalidParameter(format!("long path of {n} periods is too short")));
    }
    let batch_len = n / BATCHES;
    let n = batch_len * BATCHES;
    let mut stream = Stream::from_seed(seed);
    let sampler = truth.dist.sampler();
    let mut sigma2 = truth.vol.unconditional_variance()?;
    let initial = sigma2;

    let mut trackers = models
        .iter()
        .map(|m| {
            let start = match m.vol {
                VolatilityModel::RiskMetricsEwma { .. } => initial,
                other => other.unconditional_variance()?,
            };
            let quantiles = scorings
                .iter()
                .map(|s| {
                    let q = m.dist.quantile(s.p())?;
                    let e = m.dist.expected_shortfall(s.p())?;
                    Ok((q, e))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Tracker {
                vol: m.vol,
                sigma2: start,
                quantiles,
                sums: vec![vec![0.0; BATCHES]; scorings.len()],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // sum of sigma_t^b per rule, for the exact within-group ranking
    let mut scale_sums = vec![0.0; scorings.len()];
    let mut returns = Vec::with_capacity(batch_len.max(DEFAULT_BURN_IN));
    let mut true_sigma2 = Vec::with_capacity(batch_len);

    for step in 0..=BATCHES {
        returns.clear();
        true_sigma2.clear();
        let len = if step == 0 { DEFAULT_BURN_IN } else { batch_len };
        for _ in 0..len {
            let r = sampler.sample(&mut stream) * sigma2.sqrt();
            returns.push(r);
            true_sigma2.push(sigma2);
            sigma2 = truth.vol.next_variance(sigma2, r);
        }
        if step == 0 {
            for tr in trackers.iter_mut() {
                for &r in &returns {
                    tr.sigma2 = tr.vol.next_variance(tr.sigma2, r);
                }
            }
            continue;
        }
        let batch = step - 1;
        for (k, s) in scorings.iter().enumerate() {
            if let ScoringSpec::Quantile(q) = s {
                let b = q.b();
                scale_sums[k] += true_sigma2.iter().map(|v| v.powf(0.5 * b)).sum::<f64>();
            }
        }
        trackers.par_iter_mut().try_for_each(|tr| -> Result<()> {
            let mut acc = vec![0.0; scorings.len()];
            for &r in &returns {
                let sd = tr.sigma2.sqrt();
                for (k, s) in scorings.iter().enumerate() {
                    let (q, e) = tr.quantiles[k];
                    acc[k] += s.evaluate(sd * q, sd * e, r)?;
                }
                tr.sigma2 = tr.vol.next_variance(tr.sigma2, r);
            }
            for (k, a) in acc.into_iter().enumerate() {
                tr.sums[k][batch] = a;
            }
            Ok(())
        })?;
    }

    let labels: Vec<String> = models.iter().map(|m| m.label.clone()).collect();
    let method = OracleMethod::LongRunSimulation { n, seed };
    scorings
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let batch_means: Vec<Vec<f64>> = trackers
                .iter()
                .map(|tr| tr.sums[k].iter().map(|v| v / batch_len as f64).collect())
                .collect();
            let sim_means: Vec<f64> = batch_means
                .iter()
                .map(|b| b.iter().sum::<f64>() / BATCHES as f64)
                .collect();
            let se = |x: &dyn Fn(usize) -> f64| {
                let mean = (0..BATCHES).map(x).sum::<f64>() / BATCHES as f64;
                let ss: f64 = (0..BATCHES).map(|j| (x(j) - mean).powi(2)).sum();
                (ss / (BATCHES - 1) as f64 / BATCHES as f64).sqrt()
            };
            let stderr: Vec<f64> = batch_means.iter().map(|b| se(&|j| b[j])).collect();

            // Exact values for models sharing the true volatility under GPL rules.
            let exact: Vec<Option<f64>> = match s {
                ScoringSpec::Quantile(q) => {
                    let scale = scale_sums[k] / n as f64;
                    models
                        .iter()
                        .map(|m| {
                            if m.vol != truth.vol {
                                return Ok(None);
                            }
                            let x = m.dist.quantile(q.p())?;
                            let f = StaticForecast { label: String::new(), var: x, es: x };
                            Ok(Some(scale * expected_static_loss(&truth.dist, &f, s)?))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                ScoringSpec::Joint(_) => vec![None; models.len()],
            };
            let losses: Vec<f64> = (0..models.len())
                .map(|i| exact[i].unwrap_or(sim_means[i]))
                .collect();
            let oracle = RankingOracle::from_losses(labels.clone(), losses, stderr, method);

            let best = oracle.best_set[0];
            for i in 0..models.len() {
                if oracle.is_best(i) || (exact[i].is_some() && exact[best].is_some()) {
                    continue;
                }
                let gap = sim_means[i] - sim_means[best];
                let paired = se(&|j| batch_means[i][j] - batch_means[best][j]);
                if !(gap > GAP_TO_STDERR * paired) {
                    return Err(Error::OracleUnresolved(format!(
                        "{} vs {} under {} at p={}: gap {gap:.3e} with standard error {paired:.3e}; \
                         use a longer path than {n}",
                        labels[i],
                        labels[best],
                        s.family(),
                        s.p()
                    )));
                }
            }
            Ok(oracle)
        })
        .collect()
}
