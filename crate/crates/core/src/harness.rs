//! Monte Carlo experiment runner.
//!
//! Every replication draws one path long enough for the largest window and
//! evaluates all `(p, P)` cells on prefixes of it. Child streams are derived
//! from the master seed and the replication index (plus a cell key for
//! bootstrap streams), so results do not depend on the worker count.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{EstimatorKind, ExperimentConfig, Scenario};
use crate::dgp::{filter_volatility, simulate_path, ModelSpec, VolatilityModel, RISKMETRICS_LAMBDA};
use crate::distributions::InnovationDistribution;
use crate::eqtest::{dm_test, statistic_distribution, StatisticSummary, VarianceEstimator};
use crate::forecasting::dynamic_forecasts;
use crate::mcs::{run_mcs, LossMatrix, McsConfig};
use crate::oracle::{rank_dynamic, rank_static, RankingOracle, StaticForecast, ORACLE_CSV_HEADER};
use crate::rng::{derive_seed, Stream};
use crate::scoring::{mean, ScoringSpec};
use crate::{Error, Result};

/// Unconditional variance shared by the calibrated model sets.
pub const TARGET_VARIANCE: f64 = 3.0;

const TAG_DM: u64 = 1;
const TAG_MCS: u64 = 2;
const TAG_ORACLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSetKind {
    M5,
    M10,
}

fn nu_label(nu: f64) -> String {
    if nu.fract() == 0.0 {
        format!("{}", nu as i64)
    } else {
        nu.to_string()
    }
}

fn garch() -> VolatilityModel {
    VolatilityModel::Garch11 { omega: 1.0, alpha: 0.09, beta: 0.9 }
}

/// The competing models of the MCS experiments, true model first.
pub fn model_set(kind: ModelSetKind, nu: f64) -> Result<Vec<ModelSpec>> {
    const NUS: [f64; 3] = [3.0, 7.0, 12.0];
    if !NUS.contains(&nu) {
        return Err(Error::InvalidParameter(format!("model sets are defined for nu in {NUS:?}, got {nu}")));
    }
    let t = |v: f64| InnovationDistribution::standardized_t(v);
    let n = InnovationDistribution::StandardNormal;
    let tgarch = VolatilityModel::REFERENCE_TGARCH.calibrate_omega(TARGET_VARIANCE)?;
    let garch = garch().calibrate_omega(TARGET_VARIANCE)?;
    let constant = VolatilityModel::Constant { sigma2: TARGET_VARIANCE };
    let k = nu_label(nu);
    let mut set = vec![
        ModelSpec::new(format!("TGARCH-t({k})"), tgarch, t(nu)?),
        ModelSpec::new("TGARCH-n", tgarch, n),
        ModelSpec::new(format!("GARCH-t({k})"), garch, t(nu)?),
        ModelSpec::new("GARCH-n", garch, n),
        ModelSpec::new(format!("Const-t({k})"), constant, t(nu)?),
    ];
    if kind == ModelSetKind::M10 {
        let rm = VolatilityModel::RiskMetricsEwma { lambda: RISKMETRICS_LAMBDA };
        for v in NUS {
            set.push(ModelSpec::new(format!("RiskMetrics-t({})", nu_label(v)), rm, t(v)?));
        }
        for v in NUS.into_iter().filter(|&v| v != nu) {
            set.push(ModelSpec::new(format!("GARCH-t({})", nu_label(v)), garch, t(v)?));
        }
    }
    Ok(set)
}

/// `(i, j)` entry: fraction of replications with `mean_i - mean_j < 0`.
pub fn sign_frequency_matrix(means: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let reps = means.len();
    if reps == 0 {
        return Err(Error::InvalidParameter("no replications".into()));
    }
    let m = means[0].len();
    let mut counts = vec![vec![0usize; m]; m];
    for row in means {
        if row.len() != m {
            return Err(Error::LengthMismatch { left: m, right: row.len() });
        }
        for i in 0..m {
            for j in 0..m {
                if i != j && row[i] - row[j] < 0.0 {
                    counts[i][j] += 1;
                }
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|r| r.into_iter().map(|c| c as f64 / reps as f64).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCell {
    pub scenario: String,
    pub p: f64,
    pub p_star: Option<f64>,
    pub big_p: usize,
    pub power: f64,
    pub type3: f64,
    pub reject_rate: f64,
    pub mc_se: f64,
    pub replications: usize,
    /// Replications whose differential had zero estimated variance.
    pub degenerate: usize,
    pub mean_dbar: f64,
    pub se_dbar: f64,
    /// Oracle value of `E[d_t]` (per unit scale for dynamic scenarios: the
    /// long-run mean).
    pub expected_dbar: f64,
    pub tstats: Vec<f64>,
    pub summary: Option<StatisticSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsCell {
    pub p: f64,
    pub big_p: usize,
    pub potency: f64,
    pub avg_set_size: f64,
    pub mc_se: f64,
    pub replications: usize,
    pub labels: Vec<String>,
    /// Fraction of replications in which each model was eliminated.
    pub rejection: Vec<f64>,
    pub signs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub config: ExperimentConfig,
    pub pairwise: Vec<PairwiseCell>,
    pub mcs: Vec<McsCell>,
    /// Oracle rankings keyed by a cell description.
    pub oracles: Vec<(String, RankingOracle)>,
}

impl MetricsTable {
    pub fn pairwise_cell(&self, p: f64, big_p: usize, p_star: Option<f64>) -> Option<&PairwiseCell> {
        self.pairwise
            .iter()
            .find(|c| c.p == p && c.big_p == big_p && c.p_star == p_star)
    }

    pub fn mcs_cell(&self, p: f64, big_p: usize) -> Option<&McsCell> {
        self.mcs.iter().find(|c| c.p == p && c.big_p == big_p)
    }

    /// Writes the CSVs of this experiment into `dir` and returns their names.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut open = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
            written.push(name.to_string());
            Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
        };
        let c = &self.config;
        let family = c.scoring.family();
        let param = c.scoring.parameter();
        let nu = nu_label(c.nu);
        if c.scenario.is_mcs() {
            let mut w = open("mcs.csv")?;
            w.write_record([
                "scenario", "loss", "param", "nu", "p", "P", "alpha", "statistic", "potency",
                "avg_set_size", "mc_se", "replications",
            ])?;
            for cell in &self.mcs {
                w.write_record([
                    c.scenario.name().to_string(),
                    family.to_string(),
                    param.clone(),
                    nu.clone(),
                    cell.p.to_string(),
                    cell.big_p.to_string(),
                    c.alpha.to_string(),
                    c.statistic().name().to_string(),
                    cell.potency.to_string(),
                    cell.avg_set_size.to_string(),
                    cell.mc_se.to_string(),
                    cell.replications.to_string(),
                ])?;
            }
            w.flush()?;
            let mut w = open("rejections.csv")?;
            w.write_record(["scenario", "nu", "p", "P", "model_label", "rejection_frequency"])?;
            for cell in &self.mcs {
                for (l, f) in cell.labels.iter().zip(&cell.rejection) {
                    w.write_record([
                        c.scenario.name().to_string(),
                        nu.clone(),
                        cell.p.to_string(),
                        cell.big_p.to_string(),
                        l.clone(),
                        f.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            let mut w = open("signs.csv")?;
            w.write_record(["scenario", "nu", "p", "P", "model_i", "model_j", "freq_dbar_negative"])?;
            for cell in &self.mcs {
                for (i, li) in cell.labels.iter().enumerate() {
                    for (j, lj) in cell.labels.iter().enumerate() {
                        w.write_record([
                            c.scenario.name().to_string(),
                            nu.clone(),
                            cell.p.to_string(),
                            cell.big_p.to_string(),
                            li.clone(),
                            lj.clone(),
                            cell.signs[i][j].to_string(),
                        ])?;
                    }
                }
            }
            w.flush()?;
        } else {
            let mut w = open("pairwise.csv")?;
            w.write_record([
                "scenario", "loss", "b_or_param", "nu", "p", "P", "power", "type3", "reject_rate",
                "mc_se", "replications",
            ])?;
            for cell in &self.pairwise {
                w.write_record([
                    cell.scenario.clone(),
                    family.to_string(),
                    param.clone(),
                    nu.clone(),
                    cell.p.to_string(),
                    cell.big_p.to_string(),
                    cell.power.to_string(),
                    cell.type3.to_string(),
                    cell.reject_rate.to_string(),
                    cell.mc_se.to_string(),
                    cell.replications.to_string(),
                ])?;
            }
            w.flush()?;
            let mut w = open("tstat_summary.csv")?;
            w.write_record([
                "scenario", "loss", "b_or_param", "nu", "p", "P", "replications", "degenerate",
                "mean_dbar", "se_dbar", "expected_dbar", "t_mean", "t_variance", "t_skewness",
                "t_fitted_df",
            ])?;
            for cell in &self.pairwise {
                let s = |f: fn(&StatisticSummary) -> f64| {
                    cell.summary.as_ref().map(|x| f(x).to_string()).unwrap_or_default()
                };
                w.write_record([
                    cell.scenario.clone(),
                    family.to_string(),
                    param.clone(),
                    nu.clone(),
                    cell.p.to_string(),
                    cell.big_p.to_string(),
                    cell.replications.to_string(),
                    cell.degenerate.to_string(),
                    cell.mean_dbar.to_string(),
                    cell.se_dbar.to_string(),
                    cell.expected_dbar.to_string(),
                    s(|x| x.mean),
                    s(|x| x.variance),
                    s(|x| x.skewness),
                    s(|x| x.fitted_df),
                ])?;
            }
            w.flush()?;
        }
        let mut w = open("oracle.csv")?;
        w.write_record(ORACLE_CSV_HEADER)?;
        for (key, o) in &self.oracles {
            o.write_rows(key, &mut w)?;
        }
        w.flush()?;
        Ok(written)
    }
}

/// One pairwise comparison: model 1 (true) against model 2 at one level.
#[derive(Debug, Clone)]
struct PairVariant {
    scenario: String,
    p: f64,
    p_star: Option<f64>,
    spec: ScoringSpec,
    /// Key mixed into bootstrap streams.
    key: u64,
}

#[derive(Debug, Clone, Copy)]
struct PairOutcome {
    statistic: f64,
    reject: bool,
    sign: i8,
    dbar: f64,
    degenerate: bool,
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

/// Runs the experiment described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsTable> {
    config.validate()?;
    if config.scenario.is_mcs() {
        run_mcs_experiment(config)
    } else {
        run_pairwise_experiment(config)
    }
}

fn pair_variants(config: &ExperimentConfig) -> Result<Vec<PairVariant>> {
    let mut out = Vec::new();
    for &p in &config.p_levels {
        let spec = config.scoring.at(p)?;
        match &config.p_star {
            Some(stars) => {
                for &ps in stars {
                    out.push(PairVariant {
                        scenario: format!("{}:p*={ps}", config.scenario.name()),
                        p,
                        p_star: Some(ps),
                        spec,
                        key: ps.to_bits(),
                    });
                }
            }
            None => out.push(PairVariant {
                scenario: config.scenario.name().to_string(),
                p,
                p_star: None,
                spec,
                key: 0,
            }),
        }
    }
    Ok(out)
}

fn static_forecast_pair(
    truth: &InnovationDistribution,
    v: &PairVariant,
) -> Result<[StaticForecast; 2]> {
    let n = InnovationDistribution::StandardNormal;
    let (d2, p2, label2) = match v.p_star {
        Some(ps) => (*truth, ps, format!("{truth}@p*={ps}")),
        None => (n, v.p, n.to_string()),
    };
    Ok([
        StaticForecast {
            label: truth.to_string(),
            var: truth.quantile(v.p)?,
            es: truth.expected_shortfall(v.p)?,
        },
        StaticForecast {
            label: label2,
            var: d2.quantile(p2)?,
            es: d2.expected_shortfall(p2)?,
        },
    ])
}

fn pairwise_models(config: &ExperimentConfig) -> Result<[ModelSpec; 2]> {
    let t = InnovationDistribution::standardized_t(config.nu)?;
    let k = nu_label(config.nu);
    let tgarch = VolatilityModel::REFERENCE_TGARCH;
    let truth = ModelSpec::new(format!("TGARCH-t({k})"), tgarch, t);
    let alt = match config.scenario {
        Scenario::DynamicDistributional => {
            ModelSpec::new("TGARCH-n", tgarch, InnovationDistribution::StandardNormal)
        }
        _ => ModelSpec::new(
            format!("GARCH-t({k})"),
            garch().calibrate_omega(tgarch.unconditional_variance()?)?,
            t,
        ),
    };
    Ok([truth, alt])
}

fn run_pairwise_experiment(config: &ExperimentConfig) -> Result<MetricsTable> {
    let master = config.seed()?;
    let variants = pair_variants(config)?;
    let truth_dist = InnovationDistribution::standardized_t(config.nu)?;
    let max_p = config.max_p_size();

    // Oracle rankings, model 1 = index 0.
    let mut oracles = Vec::new();
    let mut static_pairs = Vec::new();
    let dynamic_models = if config.scenario.is_static() {
        for v in &variants {
            let pair = static_forecast_pair(&truth_dist, v)?;
            let o = rank_static(&truth_dist, &pair, &v.spec)?;
            oracles.push((format!("{}:p={}", v.scenario, v.p), o));
            static_pairs.push(pair);
        }
        None
    } else {
        let models = pairwise_models(config)?;
        let specs: Vec<ScoringSpec> = variants.iter().map(|v| v.spec).collect();
        let ranked = rank_dynamic(
            &models[0],
            &models,
            &specs,
            config.oracle_length(),
            derive_seed(master, &[TAG_ORACLE]),
        )?;
        for (v, o) in variants.iter().zip(ranked) {
            oracles.push((format!("{}:p={}", v.scenario, v.p), o));
        }
        Some(models)
    };

    let estimator = |big_p: usize| match config.estimator() {
        EstimatorKind::Iid => VarianceEstimator::IidSample,
        EstimatorKind::Mbb => VarianceEstimator::MovingBlockBootstrap {
            resamples: config.resamples(),
            block_length: config.block_length(big_p),
        },
    };

    let per_rep: Vec<Vec<PairOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<PairOutcome>> {
            let mut stream = Stream::derive(master, &[rep as u64]);
            // Loss differentials over the longest window, per variant.
            let diffs: Vec<Vec<f64>> = match &dynamic_models {
                None => {
                    let y = truth_dist.sample(max_p, &mut stream);
                    variants
                        .iter()
                        .zip(&static_pairs)
                        .map(|(v, [f1, f2])| {
                            y.iter()
                                .map(|&yt| {
                                    Ok(v.spec.evaluate(f1.var, f1.es, yt)?
                                        - v.spec.evaluate(f2.var, f2.es, yt)?)
                                })
                                .collect::<Result<Vec<f64>>>()
                        })
                        .collect::<Result<_>>()?
                }
                Some(models) => {
                    let path = simulate_path(&models[0], max_p, config.burn_in(), &mut stream)?;
                    let s1 = &path.sigma2_true;
                    let s2 = filter_volatility(&models[1], &path)?;
                    variants
                        .iter()
                        .map(|v| {
                            let es = v.spec.needs_es();
                            let f1 = dynamic_forecasts(&models[0], s1, v.p, es)?;
                            let f2 = dynamic_forecasts(&models[1], &s2, v.p, es)?;
                            (0..max_p)
                                .map(|t| {
                                    let e1 = f1.es.as_ref().map_or(0.0, |e| e[t]);
                                    let e2 = f2.es.as_ref().map_or(0.0, |e| e[t]);
                                    let y = path.returns[t];
                                    Ok(v.spec.evaluate(f1.var[t], e1, y)?
                                        - v.spec.evaluate(f2.var[t], e2, y)?)
                                })
                                .collect::<Result<Vec<f64>>>()
                        })
                        .collect::<Result<_>>()?
                }
            };
            let mut out = Vec::with_capacity(variants.len() * config.p_sizes.len());
            for (v, d) in variants.iter().zip(&diffs) {
                for &big_p in &config.p_sizes {
                    let window = &d[..big_p];
                    let mut bs = Stream::derive(
                        master,
                        &[rep as u64, TAG_DM, v.p.to_bits(), big_p as u64, v.key],
                    );
                    let dbar = mean(window);
                    let outcome = match dm_test(window, config.alpha, estimator(big_p), &mut bs) {
                        Ok(o) => PairOutcome {
                            statistic: o.statistic,
                            reject: o.reject,
                            sign: o.dbar_sign,
                            dbar,
                            degenerate: false,
                        },
                        // A constant differential leaves the statistic
                        // undefined; it counts as no rejection.
                        Err(Error::DegenerateDifferential(_)) => PairOutcome {
                            statistic: f64::NAN,
                            reject: false,
                            sign: sign(dbar),
                            dbar,
                            degenerate: true,
                        },
                        Err(e) => return Err(e),
                    };
                    out.push(outcome);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let reps = config.replications as f64;
    let mut pairwise = Vec::new();
    for (vi, v) in variants.iter().enumerate() {
        let oracle = &oracles[vi].1;
        let mu_sign = oracle.mu_sign(0, 1);
        let expected = oracle.expected_losses[0] - oracle.expected_losses[1];
        for (pi, &big_p) in config.p_sizes.iter().enumerate() {
            let idx = vi * config.p_sizes.len() + pi;
            let cell: Vec<PairOutcome> = per_rep.iter().map(|r| r[idx]).collect();
            let rejects = cell.iter().filter(|o| o.reject).count() as f64;
            let power = cell
                .iter()
                .filter(|o| o.reject && o.sign == mu_sign && mu_sign != 0)
                .count() as f64
                / reps;
            let reject_rate = rejects / reps;
            let dbars: Vec<f64> = cell.iter().map(|o| o.dbar).collect();
            let mean_dbar = mean(&dbars);
            let se_dbar = if cell.len() > 1 {
                (dbars.iter().map(|x| (x - mean_dbar).powi(2)).sum::<f64>()
                    / (reps - 1.0)
                    / reps)
                    .sqrt()
            } else {
                f64::NAN
            };
            let tstats: Vec<f64> = cell.iter().map(|o| o.statistic).collect();
            pairwise.push(PairwiseCell {
                scenario: v.scenario.clone(),
                p: v.p,
                p_star: v.p_star,
                big_p,
                power,
                type3: reject_rate - power,
                reject_rate,
                mc_se: (power * (1.0 - power) / reps).sqrt(),
                replications: config.replications,
                degenerate: cell.iter().filter(|o| o.degenerate).count(),
                mean_dbar,
                se_dbar,
                expected_dbar: expected,
                summary: statistic_distribution(&tstats).ok(),
                tstats,
            });
        }
    }
    Ok(MetricsTable {
        config: config.clone(),
        pairwise,
        mcs: Vec::new(),
        oracles,
    })
}

#[derive(Debug, Clone)]
struct McsOutcome {
    survived: Vec<bool>,
    means: Vec<f64>,
}

fn run_mcs_experiment(config: &ExperimentConfig) -> Result<MetricsTable> {
    let master = config.seed()?;
    let kind = if config.scenario == Scenario::McsM5 { ModelSetKind::M5 } else { ModelSetKind::M10 };
    let models = model_set(kind, config.nu)?;
    let labels: Vec<String> = models.iter().map(|m| m.label.clone()).collect();
    let specs: Vec<ScoringSpec> = config
        .p_levels
        .iter()
        .map(|&p| config.scoring.at(p))
        .collect::<Result<_>>()?;
    let ranked = rank_dynamic(
        &models[0],
        &models,
        &specs,
        config.oracle_length(),
        derive_seed(master, &[TAG_ORACLE]),
    )?;
    let max_p = config.max_p_size();

    let per_rep: Vec<Vec<McsOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<McsOutcome>> {
            let mut stream = Stream::derive(master, &[rep as u64]);
            let path = simulate_path(&models[0], max_p, config.burn_in(), &mut stream)?;
            let sigma2: Vec<Vec<f64>> = models
                .iter()
                .map(|m| filter_volatility(m, &path))
                .collect::<Result<_>>()?;
            let mut out = Vec::new();
            for (&p, spec) in config.p_levels.iter().zip(&specs) {
                let columns: Vec<Vec<f64>> = models
                    .iter()
                    .zip(&sigma2)
                    .map(|(m, s)| {
                        let f = dynamic_forecasts(m, s, p, spec.needs_es())?;
                        (0..max_p)
                            .map(|t| {
                                let e = f.es.as_ref().map_or(0.0, |e| e[t]);
                                spec.evaluate(f.var[t], e, path.returns[t])
                            })
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?;
                for &big_p in &config.p_sizes {
                    let window: Vec<Vec<f64>> = columns.iter().map(|c| c[..big_p].to_vec()).collect();
                    let means = window.iter().map(|c| mean(c)).collect();
                    let lm = LossMatrix::new(window, labels.clone())?;
                    let mcs_config = McsConfig {
                        alpha: config.alpha,
                        statistic: config.statistic(),
                        resamples: config.resamples(),
                        block_length: config.block_length(big_p),
                        seed: derive_seed(master, &[rep as u64, TAG_MCS, p.to_bits(), big_p as u64]),
                    };
                    let result = run_mcs(&lm, &mcs_config)?;
                    out.push(McsOutcome {
                        survived: labels.iter().map(|l| result.contains(l)).collect(),
                        means,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let reps = config.replications as f64;
    let mut cells = Vec::new();
    for (pi, &p) in config.p_levels.iter().enumerate() {
        let best = &ranked[pi].best_set;
        for (si, &big_p) in config.p_sizes.iter().enumerate() {
            let idx = pi * config.p_sizes.len() + si;
            let cell: Vec<&McsOutcome> = per_rep.iter().map(|r| &r[idx]).collect();
            let potency = cell
                .iter()
                .filter(|o| best.iter().all(|&b| o.survived[b]))
                .count() as f64
                / reps;
            let avg_set_size = cell
                .iter()
                .map(|o| o.survived.iter().filter(|s| **s).count() as f64)
                .sum::<f64>()
                / reps;
            let rejection = (0..labels.len())
                .map(|i| cell.iter().filter(|o| !o.survived[i]).count() as f64 / reps)
                .collect();
            let means: Vec<Vec<f64>> = cell.iter().map(|o| o.means.clone()).collect();
            cells.push(McsCell {
                p,
                big_p,
                potency,
                avg_set_size,
                mc_se: (potency * (1.0 - potency) / reps).sqrt(),
                replications: config.replications,
                labels: labels.clone(),
                rejection,
                signs: sign_frequency_matrix(&means)?,
            });
        }
    }
    let oracles = config
        .p_levels
        .iter()
        .zip(ranked)
        .map(|(p, o)| (format!("{}:p={p}", config.scenario.name()), o))
        .collect();
    Ok(MetricsTable {
        config: config.clone(),
        pairwise: Vec::new(),
        mcs: cells,
        oracles,
    })
}
