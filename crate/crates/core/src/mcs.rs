//! Model Confidence Set.
//!
//! Sequential equivalence tests on the set of surviving models. Bootstrap
//! null distributions come from a moving block bootstrap of the rows of the
//! loss matrix: one set of block starts per resample is shared by all models,
//! so cross-model correlation is preserved. The resample means are drawn once
//! and reused by every elimination step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{prefix_sums, MovingBlockBootstrap};
use crate::eqtest::is_degenerate;
use crate::rng::Stream;
use crate::scoring::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    /// One loss series per model, all of length `P`.
    columns: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl LossMatrix {
    pub fn new(columns: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if columns.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 models, got {}",
                columns.len()
            )));
        }
        if labels.len() != columns.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: columns.len(),
            });
        }
        let n = columns[0].len();
        for c in &columns {
            if c.len() != n {
                return Err(Error::LengthMismatch { left: n, right: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite loss".into()));
            }
        }
        if n == 0 {
            return Err(Error::InvalidParameter("empty loss matrix".into()));
        }
        Ok(Self { columns, labels })
    }

    pub fn periods(&self) -> usize {
        self.columns[0].len()
    }

    pub fn models(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn means(&self) -> Vec<f64> {
        self.columns.iter().map(|c| mean(c)).collect()
    }

    fn scale(&self) -> f64 {
        self.columns
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelativeMode {
    /// `d_{t,ij} = l_{t,i} - l_{t,j}` for every `i < j`.
    Pairwise,
    /// `d_{t,i.} = l_{t,i} - mean_j l_{t,j}`.
    Centered,
}

/// Pairs `(i, j)`, `i < j`, in the order used by [`RelativeMode::Pairwise`].
pub fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect()
}

pub fn relative_performance(losses: &LossMatrix, mode: RelativeMode) -> Vec<Vec<f64>> {
    let n = losses.periods();
    let m = losses.models();
    match mode {
        RelativeMode::Pairwise => pairs(m)
            .into_iter()
            .map(|(i, j)| {
                let (a, b) = (losses.column(i), losses.column(j));
                (0..n).map(|t| a[t] - b[t]).collect()
            })
            .collect(),
        RelativeMode::Centered => {
            let avg: Vec<f64> = (0..n)
                .map(|t| losses.columns.iter().map(|c| c[t]).sum::<f64>() / m as f64)
                .collect();
            losses
                .columns
                .iter()
                .map(|c| c.iter().zip(&avg).map(|(l, a)| l - a).collect())
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McsStatistic {
    Tmax,
    Tr,
}

impl McsStatistic {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tmax => "tmax",
            Self::Tr => "tr",
        }
    }
}

impl std::str::FromStr for McsStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tmax" => Ok(Self::Tmax),
            "tr" => Ok(Self::Tr),
            other => Err(Error::Unsupported(format!("MCS statistic {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticValue {
    pub value: f64,
    /// Per-model elimination scores: `t_i.` for Tmax, `max_j t_ij` for TR.
    pub t: Vec<f64>,
}

/// Evaluates T_max or T_R from mean differentials and their variances.
///
/// For Tmax, `means` and `variances` hold the `m` centered differentials. For
/// TR they hold the pairwise differentials in [`pairs`] order.
pub fn mcs_statistic(
    means: &[f64],
    variances: &[f64],
    m: usize,
    which: McsStatistic,
) -> Result<StatisticValue> {
    if means.len() != variances.len() {
        return Err(Error::LengthMismatch {
            left: means.len(),
            right: variances.len(),
        });
    }
    let expected = match which {
        McsStatistic::Tmax => m,
        McsStatistic::Tr => m * (m - 1) / 2,
    };
    if means.len() != expected {
        return Err(Error::LengthMismatch {
            left: means.len(),
            right: expected,
        });
    }
    let prs = pairs(m);
    for (k, v) in variances.iter().enumerate() {
        if !(*v > 0.0) {
            let what = match which {
                McsStatistic::Tmax => format!("model {k} against the set average"),
                McsStatistic::Tr => format!("models {} and {}", prs[k].0, prs[k].1),
            };
            return Err(Error::DegenerateDifferential(format!("zero variance for {what}")));
        }
    }
    let t: Vec<f64> = means
        .iter()
        .zip(variances)
        .map(|(d, v)| d / v.sqrt())
        .collect();
    Ok(match which {
        McsStatistic::Tmax => StatisticValue {
            value: t.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            t,
        },
        McsStatistic::Tr => {
            let mut score = vec![f64::NEG_INFINITY; m];
            for (&(i, j), &tij) in prs.iter().zip(&t) {
                score[i] = score[i].max(tij);
                score[j] = score[j].max(-tij);
            }
            StatisticValue {
                value: t.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                t: score,
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsConfig {
    pub alpha: f64,
    pub statistic: McsStatistic,
    pub resamples: usize,
    pub block_length: usize,
    pub seed: u64,
}

impl McsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("MCS level {}", self.alpha)));
        }
        if self.resamples == 0 {
            return Err(Error::InvalidParameter("zero bootstrap resamples".into()));
        }
        if self.block_length == 0 {
            return Err(Error::InvalidParameter("zero block length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub label: String,
    /// 1-based elimination step.
    pub step: usize,
    pub step_pvalue: f64,
    pub mcs_pvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsResult {
    /// Survivors in column order.
    pub surviving: Vec<String>,
    pub eliminated: Vec<Elimination>,
    /// MCS p-value of every model, in column order.
    pub per_model_pvalue: Vec<(String, f64)>,
}

impl McsResult {
    pub fn pvalue(&self, label: &str) -> Option<f64> {
        self.per_model_pvalue
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| *p)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.surviving.iter().any(|l| l == label)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model_label", "eliminated_step", "step_pvalue", "mcs_pvalue", "survived"])?;
        for e in &self.eliminated {
            w.write_record([
                e.label.clone(),
                e.step.to_string(),
                e.step_pvalue.to_string(),
                e.mcs_pvalue.to_string(),
                "false".into(),
            ])?;
        }
        for l in &self.surviving {
            let p = self.pvalue(l).unwrap_or(1.0);
            w.write_record([l.clone(), String::new(), String::new(), p.to_string(), "true".into()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bootstrap resample means, `resamples x m`, row-major.
struct BootMeans {
    m: usize,
    data: Vec<f64>,
}

impl BootMeans {
    fn draw(losses: &LossMatrix, config: &McsConfig) -> Result<Self> {
        let n = losses.periods();
        let m = losses.models();
        let mbb = MovingBlockBootstrap::new(n, config.block_length)?;
        let prefixes: Vec<Vec<f64>> = losses.columns.iter().map(|c| prefix_sums(c)).collect();
        let mut stream = Stream::from_seed(config.seed);
        let mut starts = Vec::new();
        let mut data = Vec::with_capacity(config.resamples * m);
        for _ in 0..config.resamples {
            mbb.draw_starts(&mut stream, &mut starts);
            data.extend(prefixes.iter().map(|p| mbb.resampled_mean(p, &starts)));
        }
        Ok(Self { m, data })
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }
}

/// Standardized differential that tolerates rounding-level variances: such a
/// component contributes 0 when its mean is also at rounding level, and an
/// infinite statistic otherwise (a constant, nonzero loss gap).
fn standardize(d: f64, var: f64, scale: f64) -> f64 {
    if is_degenerate(var, scale) {
        if d.abs() <= 1e-13 * scale {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    } else {
        d / var.sqrt()
    }
}

fn bootstrap_ratio(dev: f64, var: f64, scale: f64) -> f64 {
    if is_degenerate(var, scale) {
        0.0
    } else {
        dev / var.sqrt()
    }
}

struct Step {
    pvalue: f64,
    /// Position within the active set of the model to eliminate.
    worst: usize,
}

fn tmax_step(active: &[usize], sample: &[f64], boot: &BootMeans, scale: f64) -> Step {
    let k = active.len() as f64;
    let avg = active.iter().map(|&i| sample[i]).sum::<f64>() / k;
    let dbar: Vec<f64> = active.iter().map(|&i| sample[i] - avg).collect();
    let dev = |row: &[f64], out: &mut Vec<f64>| {
        let avg_b = active.iter().map(|&i| row[i]).sum::<f64>() / k;
        out.clear();
        out.extend(active.iter().zip(&dbar).map(|(&i, d)| row[i] - avg_b - d));
    };
    let mut var = vec![0.0; active.len()];
    let mut buf = Vec::with_capacity(active.len());
    let mut count = 0usize;
    for row in boot.rows() {
        dev(row, &mut buf);
        for (v, e) in var.iter_mut().zip(&buf) {
            *v += e * e;
        }
        count += 1;
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    let t: Vec<f64> = dbar
        .iter()
        .zip(&var)
        .map(|(d, v)| standardize(*d, *v, scale))
        .collect();
    let stat = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut exceed = 0usize;
    for row in boot.rows() {
        dev(row, &mut buf);
        let tb = buf
            .iter()
            .zip(&var)
            .map(|(e, v)| bootstrap_ratio(*e, *v, scale))
            .fold(f64::NEG_INFINITY, f64::max);
        if tb >= stat {
            exceed += 1;
        }
    }
    Step {
        pvalue: exceed as f64 / count as f64,
        worst: argmax(&t),
    }
}

fn tr_step(active: &[usize], sample: &[f64], boot: &BootMeans, scale: f64) -> Step {
    let prs = pairs(active.len());
    let dbar: Vec<f64> = prs
        .iter()
        .map(|&(a, b)| sample[active[a]] - sample[active[b]])
        .collect();
    let dev = |row: &[f64], k: usize| {
        let (a, b) = prs[k];
        row[active[a]] - row[active[b]] - dbar[k]
    };
    let mut var = vec![0.0; prs.len()];
    let mut count = 0usize;
    for row in boot.rows() {
        for (k, v) in var.iter_mut().enumerate() {
            let e = dev(row, k);
            *v += e * e;
        }
        count += 1;
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    let t: Vec<f64> = dbar
        .iter()
        .zip(&var)
        .map(|(d, v)| standardize(*d, *v, scale))
        .collect();
    let stat = t.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut score = vec![f64::NEG_INFINITY; active.len()];
    for (&(a, b), &tab) in prs.iter().zip(&t) {
        score[a] = score[a].max(tab);
        score[b] = score[b].max(-tab);
    }
    let mut exceed = 0usize;
    for row in boot.rows() {
        let tb = (0..prs.len())
            .map(|k| bootstrap_ratio(dev(row, k), var[k], scale).abs())
            .fold(0.0f64, f64::max);
        if tb >= stat {
            exceed += 1;
        }
    }
    Step {
        pvalue: exceed as f64 / count as f64,
        worst: argmax(&score),
    }
}

/// First index of the maximum.
fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Runs the sequential elimination procedure at level `config.alpha`.
pub fn run_mcs(losses: &LossMatrix, config: &McsConfig) -> Result<McsResult> {
    config.validate()?;
    let boot = BootMeans::draw(losses, config)?;
    let sample = losses.means();
    let scale = losses.scale();
    let mut active: Vec<usize> = (0..losses.models()).collect();
    let mut eliminated = Vec::new();
    let mut running = 0.0f64;
    let mut final_p = 1.0;
    while active.len() > 1 {
        let step = match config.statistic {
            McsStatistic::Tmax => tmax_step(&active, &sample, &boot, scale),
            McsStatistic::Tr => tr_step(&active, &sample, &boot, scale),
        };
        running = running.max(step.pvalue);
        if step.pvalue >= config.alpha {
            final_p = running;
            break;
        }
        let idx = active.remove(step.worst);
        eliminated.push(Elimination {
            label: losses.labels[idx].clone(),
            step: eliminated.len() + 1,
            step_pvalue: step.pvalue,
            mcs_pvalue: running,
        });
    }
    let surviving: Vec<String> = active.iter().map(|&i| losses.labels[i].clone()).collect();
    let per_model_pvalue = losses
        .labels
        .iter()
        .map(|l| {
            let p = eliminated
                .iter()
                .find(|e| &e.label == l)
                .map(|e| e.mcs_pvalue)
                .unwrap_or(final_p);
            (l.clone(), p)
        })
        .collect();
    Ok(McsResult {
        surviving,
        eliminated,
        per_model_pvalue,
    })
}
