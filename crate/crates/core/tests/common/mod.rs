//! Numerical checks shared by the integration suites and the acceptance runner.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use tailcomp_core::bootstrap::default_block_length;
use tailcomp_core::config::{ExperimentConfig, P_LEVELS};
use tailcomp_core::distributions::InnovationDistribution;
use tailcomp_core::eqtest::{dm_test, VarianceEstimator};
use tailcomp_core::mcs::{run_mcs, LossMatrix, McsConfig, McsStatistic};
use tailcomp_core::oracle::{expected_tick_diff_static, variance_of_centered_differential};
use tailcomp_core::quad::{integrate_pieces, ORACLE_TOL};
use tailcomp_core::rng::Stream;
use tailcomp_core::scoring::{gpl_loss, joint_loss, JointLossSpec, Parametrization, QuantileLossSpec};

fn normal(s: &mut Stream) -> f64 {
    StandardNormal.sample(s)
}

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).expect("valid config")
}

pub fn dists() -> Vec<InnovationDistribution> {
    let mut v = vec![InnovationDistribution::StandardNormal];
    for nu in [3.0, 4.0, 7.0, 12.0] {
        v.push(InnovationDistribution::standardized_t(nu).unwrap());
    }
    v
}

pub fn t4() -> InnovationDistribution {
    InnovationDistribution::standardized_t(4.0).unwrap()
}

/// A static comparison: true `p`-quantile `x1` against `x2` under `truth`.
pub struct StaticCell {
    pub label: String,
    pub truth: InnovationDistribution,
    pub x1: f64,
    pub x2: f64,
    pub p: f64,
}

/// Every static pairwise cell: t(4) against the normal quantile, and t(4)
/// against its own quantile at a wrong level.
pub fn static_cells() -> Vec<StaticCell> {
    let truth = t4();
    let normal = InnovationDistribution::StandardNormal;
    let mut cells = Vec::new();
    for p in P_LEVELS {
        cells.push(StaticCell {
            label: format!("distributional p={p}"),
            truth,
            x1: truth.quantile(p).unwrap(),
            x2: normal.quantile(p).unwrap(),
            p,
        });
    }
    for (p, p_star) in [(0.01, 0.05), (0.01, 0.015), (0.01, 0.025), (0.025, 0.05), (0.05, 0.1)] {
        cells.push(StaticCell {
            label: format!("wrong quantile p={p} p*={p_star}"),
            truth,
            x1: truth.quantile(p).unwrap(),
            x2: truth.quantile(p_star).unwrap(),
            p,
        });
    }
    cells
}

/// Monte Carlo mean of the tick differential against the closed form, as a
/// z-score.
pub fn oracle_mc_zscores(draws: usize, seed: u64) -> Vec<(String, f64)> {
    static_cells()
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let mut s = Stream::derive(seed, &[k as u64]);
            let spec = QuantileLossSpec::tick(c.p).unwrap();
            let ys = c.truth.sample(draws, &mut s);
            let d: Vec<f64> = ys
                .iter()
                .map(|&y| gpl_loss(&spec, c.x1, y) - gpl_loss(&spec, c.x2, y))
                .collect();
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let exact = expected_tick_diff_static(&c.truth, c.x1, c.x2, c.p).unwrap();
            (c.label, (mean - exact) / (var / n).sqrt())
        })
        .collect()
}

/// Largest absolute gap between the centered-differential variance formula
/// and `w' S w` over random PSD matrices.
pub fn variance_formula_max_error(matrices: usize, seed: u64) -> f64 {
    let mut s = Stream::from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..matrices {
        let m = s.random_range(2..=8);
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..m).map(|_| normal(&mut s)).collect())
            .collect();
        let cov: Vec<Vec<f64>> = (0..m)
            .map(|r| (0..m).map(|c| (0..m).map(|k| a[r][k] * a[c][k]).sum()).collect())
            .collect();
        let i = s.random_range(0..m);
        let w: Vec<f64> = (0..m)
            .map(|j| if j == i { 1.0 } else { 0.0 } - 1.0 / m as f64)
            .collect();
        let direct: f64 = (0..m)
            .flat_map(|r| (0..m).map(move |c| (r, c)))
            .map(|(r, c)| w[r] * cov[r][c] * w[c])
            .sum();
        let formula = variance_of_centered_differential(&cov, i).unwrap();
        worst = worst.max((formula - direct).abs());
    }
    worst
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

/// Cells where the expected GPL loss, minimized over a 401-point grid around
/// the true quantile, is not minimized at the true quantile.
pub fn gpl_grid_failures() -> Vec<String> {
    let mut bad = Vec::new();
    for dist in dists() {
        for p in P_LEVELS {
            let q = dist.quantile(p).unwrap();
            for b in [0.5, 1.0, 2.0] {
                let spec = QuantileLossSpec::new(p, b).unwrap();
                let grid: Vec<f64> = (0..401).map(|k| q - 1.5 + 3.0 * k as f64 / 400.0).collect();
                let losses: Vec<f64> = grid
                    .iter()
                    .map(|&x| {
                        let mut pts = vec![f64::NEG_INFINITY, x.min(0.0), x.max(0.0), f64::INFINITY];
                        pts.dedup();
                        integrate_pieces(|y| gpl_loss(&spec, x, y) * dist.pdf(y), &pts, ORACLE_TOL)
                    })
                    .collect();
                let k = argmin(&losses);
                if k != 200 {
                    bad.push(format!("{dist} p={p} b={b}: minimum at {}", grid[k]));
                }
            }
        }
    }
    bad
}

/// Same for the joint losses over a 21 x 21 grid around `(VaR, ES)`.
pub fn joint_grid_failures() -> Vec<String> {
    let mut bad = Vec::new();
    let h = 0.02;
    for dist in dists() {
        for p in P_LEVELS {
            let v = dist.quantile(p).unwrap();
            let e = dist.expected_shortfall(p).unwrap();
            for par in Parametrization::ALL {
                let spec = JointLossSpec::new(p, par).unwrap();
                let mut best = (f64::INFINITY, 0, 0);
                for i in 0..21 {
                    for j in 0..21 {
                        let x1 = v + h * (i as f64 - 10.0);
                        let x2 = e + h * (j as f64 - 10.0);
                        let val = integrate_pieces(
                            |y| joint_loss(&spec, x1, x2, y).unwrap() * dist.pdf(y),
                            &[f64::NEG_INFINITY, x1, 0.0, f64::INFINITY],
                            ORACLE_TOL,
                        );
                        if val < best.0 {
                            best = (val, i, j);
                        }
                    }
                }
                if (best.1, best.2) != (10, 10) {
                    bad.push(format!("{dist} p={p} {par}: minimum at grid ({}, {})", best.1, best.2));
                }
            }
        }
    }
    bad
}

/// Rejection rate of the IID-variance DM test on mean-zero normal
/// differentials.
pub fn dm_size(reps: usize, n: usize, seed: u64) -> f64 {
    let mut rejected = 0;
    for r in 0..reps {
        let mut s = Stream::derive(seed, &[r as u64]);
        let d: Vec<f64> = (0..n).map(|_| normal(&mut s)).collect();
        let out = dm_test(&d, 0.05, VarianceEstimator::IidSample, &mut s).unwrap();
        rejected += out.reject as usize;
    }
    rejected as f64 / reps as f64
}

fn normal_columns(m: usize, n: usize, shifts: &[f64], s: &mut Stream) -> LossMatrix {
    let cols = (0..m)
        .map(|i| {
            let shift = shifts.get(i).copied().unwrap_or(0.0);
            (0..n).map(|_| shift + normal(s)).collect::<Vec<f64>>()
        })
        .collect();
    LossMatrix::new(cols, (0..m).map(|i| format!("m{i}")).collect()).unwrap()
}

/// Frequency with which the MCS keeps all `m` equal-mean iid normal columns.
pub fn mcs_weak_null(reps: usize, m: usize, n: usize, alpha: f64, resamples: usize, seed: u64) -> f64 {
    let mut kept = 0;
    for r in 0..reps {
        let mut s = Stream::derive(seed, &[r as u64]);
        let losses = normal_columns(m, n, &[], &mut s);
        let cfg = McsConfig {
            alpha,
            statistic: McsStatistic::Tmax,
            resamples,
            block_length: default_block_length(n),
            seed: s.random(),
        };
        let res = run_mcs(&losses, &cfg).unwrap();
        kept += res.eliminated.is_empty() as usize;
    }
    kept as f64 / reps as f64
}

/// Frequency with which the MCS keeps the single best of `m` columns, the
/// best being shifted down by `delta` standard deviations.
pub fn mcs_single_best(reps: usize, m: usize, n: usize, delta: f64, resamples: usize, seed: u64) -> f64 {
    let mut kept = 0;
    for r in 0..reps {
        let mut s = Stream::derive(seed, &[r as u64]);
        let losses = normal_columns(m, n, &[-delta], &mut s);
        let cfg = McsConfig {
            alpha: 0.1,
            statistic: McsStatistic::Tmax,
            resamples,
            block_length: default_block_length(n),
            seed: s.random(),
        };
        kept += run_mcs(&losses, &cfg).unwrap().contains("m0") as usize;
    }
    kept as f64 / reps as f64
}

pub fn normal_matrix(m: usize, n: usize, shifts: &[f64], seed: u64) -> LossMatrix {
    normal_columns(m, n, shifts, &mut Stream::from_seed(seed))
}
