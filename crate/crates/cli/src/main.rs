//! `tailcomp`: experiments, scoring, equal-predictive-ability tests and oracle
//! queries from the command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tailcomp_core::bootstrap::default_block_length;
use tailcomp_core::config::ExperimentConfig;
use tailcomp_core::distributions::InnovationDistribution;
use tailcomp_core::eqtest::{dm_test, VarianceEstimator};
use tailcomp_core::harness::run_experiment;
use tailcomp_core::mcs::{run_mcs, LossMatrix, McsConfig, McsStatistic};
use tailcomp_core::oracle;
use tailcomp_core::rng::Stream;
use tailcomp_core::scoring::{JointLossSpec, Parametrization, QuantileLossSpec, ScoringSpec};
use tailcomp_core::{Error, VERSION};

#[derive(Parser)]
#[command(name = "tailcomp", version, about = "Forecast comparison for VaR and ES")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Score forecasts in a CSV with columns `y,var[,es]`.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        loss: LossArgs,
    },
    /// Diebold-Mariano test on a CSV with columns `loss_a,loss_b`.
    Dm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Estimator::Iid)]
        estimator: Estimator,
        #[arg(long = "B", default_value_t = 1000)]
        resamples: usize,
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Model Confidence Set on a wide CSV of losses, one column per model.
    Mcs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Statistic::Tmax)]
        statistic: Statistic,
        #[arg(long = "B", default_value_t = 5000)]
        resamples: usize,
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        seed: u64,
    },
    /// Closed-form and numerical reference values.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, value_enum)]
    loss: Loss,
    #[arg(long)]
    p: f64,
    /// GPL degree.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Gpl,
    Al,
    Nz,
    Fzg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Iid,
    Mbb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Statistic {
    Tmax,
    Tr,
}

#[derive(Args)]
struct DistArgs {
    /// `n` (standard normal) or `t` (unit-variance Student-t).
    #[arg(long, default_value = "t")]
    dist: String,
    #[arg(long, default_value_t = 4.0)]
    nu: f64,
}

impl DistArgs {
    fn resolve(&self) -> Result<InnovationDistribution, Error> {
        match self.dist.as_str() {
            "n" | "normal" => Ok(InnovationDistribution::StandardNormal),
            "t" => InnovationDistribution::standardized_t(self.nu),
            other => Err(Error::Unsupported(format!("distribution {other:?}"))),
        }
    }
}

#[derive(Subcommand)]
enum OracleQuery {
    Quantile {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long)]
        p: f64,
    },
    Es {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long)]
        p: f64,
    },
    /// Expected tick-loss differential of the true quantile against `--q2`,
    /// or against the true quantile scaled by `--c`.
    ExpectedDiff {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long)]
        p: f64,
        #[arg(long, conflicts_with = "c", required_unless_present = "c", allow_negative_numbers = true)]
        q2: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Variance of a centered loss differential from a covariance matrix
    /// given as rows separated by `;`.
    VarianceFormula {
        #[arg(long, allow_hyphen_values = true)]
        cov: String,
        #[arg(long)]
        index: usize,
    },
}

/// Usage errors exit with 2, runtime failures with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::OracleUnresolved(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Experiment { config, out: dir, workers, seed } => {
            cmd_experiment(&config, &dir, workers, seed)
        }
        Command::Score { input, loss } => cmd_score(&input, &loss, &mut out),
        Command::Dm { input, alpha, estimator, resamples, block, seed } => {
            cmd_dm(&input, alpha, estimator, resamples, block, seed, &mut out)
        }
        Command::Mcs { input, alpha, statistic, resamples, block, seed } => {
            cmd_mcs(&input, alpha, statistic, resamples, block, seed, &mut out)
        }
        Command::Oracle { query } => cmd_oracle(query, &mut out),
    }
}

fn cmd_experiment(config_path: &Path, dir: &Path, workers: usize, seed: u64) -> Result<(), Error> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    let mut config = ExperimentConfig::from_toml_str(&text)?;
    match config.master_seed {
        Some(s) if s != seed => {
            return Err(Error::Config(format!(
                "field `master_seed`: {s} conflicts with --seed {seed}"
            )))
        }
        _ => config.master_seed = Some(seed),
    }
    fs::create_dir_all(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let table = pool.install(|| run_experiment(&config))?;
    let files = table.write_csvs(dir)?;
    let mut manifest = fs::File::create(dir.join("manifest.txt"))?;
    writeln!(manifest, "config={}", config_path.display())?;
    writeln!(manifest, "out={}", dir.display())?;
    writeln!(manifest, "workers={}", pool.current_num_threads())?;
    writeln!(manifest, "master_seed={seed}")?;
    writeln!(manifest, "version={VERSION}")?;
    writeln!(manifest, "files={}", files.join(","))?;
    Ok(())
}

fn scoring_spec(args: &LossArgs) -> Result<ScoringSpec, Error> {
    let joint = |par| Ok(ScoringSpec::Joint(JointLossSpec::new(args.p, par)?));
    match args.loss {
        Loss::Gpl => Ok(ScoringSpec::Quantile(QuantileLossSpec::new(args.p, args.b)?)),
        Loss::Al => joint(Parametrization::Al),
        Loss::Nz => joint(Parametrization::Nz),
        Loss::Fzg => joint(Parametrization::Fzg),
    }
}

/// Reads the named columns of a CSV file as numbers.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, Error> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| Error::InvalidParameter(format!("missing column `{n}` in {}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let v: f64 = rec.get(i).unwrap_or("").trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("row {}: column `{}` is not a number", row + 1, names[k]))
            })?;
            cols[k].push(v);
        }
    }
    Ok(cols)
}

fn has_column(path: &Path, name: &str) -> Result<bool, Error> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.headers()?.iter().any(|h| h.trim() == name))
}

fn cmd_score<W: Write>(input: &Path, args: &LossArgs, out: &mut W) -> Result<(), Error> {
    let spec = scoring_spec(args)?;
    let cols = if spec.needs_es() {
        if !has_column(input, "es")? {
            return Err(Error::MissingEs(format!("{} has no `es` column", input.display())));
        }
        read_columns(input, &["y", "var", "es"])?
    } else {
        read_columns(input, &["y", "var"])?
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "loss"])?;
    for t in 0..cols[0].len() {
        let es = cols.get(2).map_or(0.0, |c| c[t]);
        let loss = spec.evaluate(cols[1][t], es, cols[0][t])?;
        w.write_record([(t + 1).to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_dm<W: Write>(
    input: &Path,
    alpha: f64,
    estimator: Estimator,
    resamples: usize,
    block: Option<usize>,
    seed: Option<u64>,
    out: &mut W,
) -> Result<(), Error> {
    let cols = read_columns(input, &["loss_a", "loss_b"])?;
    let d: Vec<f64> = cols[0].iter().zip(&cols[1]).map(|(a, b)| a - b).collect();
    let (est, seed) = match estimator {
        Estimator::Iid => (VarianceEstimator::IidSample, seed.unwrap_or(0)),
        Estimator::Mbb => (
            VarianceEstimator::MovingBlockBootstrap {
                resamples,
                block_length: block.unwrap_or_else(|| default_block_length(d.len())),
            },
            seed.ok_or_else(|| Error::Config("--seed is required with --estimator mbb".into()))?,
        ),
    };
    let o = dm_test(&d, alpha, est, &mut Stream::from_seed(seed))?;
    let verdict = if o.reject { "reject" } else { "no rejection" };
    writeln!(out, "# {verdict} of equal predictive ability at alpha={alpha}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["statistic", "pvalue", "reject", "dbar_sign", "mean", "variance"])?;
    w.write_record([
        o.statistic.to_string(),
        o.pvalue.to_string(),
        o.reject.to_string(),
        o.dbar_sign.to_string(),
        o.mean.to_string(),
        o.variance.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn cmd_mcs<W: Write>(
    input: &Path,
    alpha: f64,
    statistic: Statistic,
    resamples: usize,
    block: Option<usize>,
    seed: u64,
    out: &mut W,
) -> Result<(), Error> {
    let mut reader = csv::Reader::from_path(input)?;
    let labels: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let names: Vec<&str> = labels.iter().map(String::as_str).collect();
    let cols = read_columns(input, &names)?;
    let n = cols.first().map_or(0, Vec::len);
    let lm = LossMatrix::new(cols, labels)?;
    let config = McsConfig {
        alpha,
        statistic: match statistic {
            Statistic::Tmax => McsStatistic::Tmax,
            Statistic::Tr => McsStatistic::Tr,
        },
        resamples,
        block_length: block.unwrap_or_else(|| default_block_length(n)),
        seed,
    };
    run_mcs(&lm, &config)?.write_csv(out)
}

fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, Error> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("matrix entry {v:?}")))
                })
                .collect()
        })
        .collect()
}

fn cmd_oracle<W: Write>(query: OracleQuery, out: &mut W) -> Result<(), Error> {
    let value = match query {
        OracleQuery::Quantile { dist, p } => dist.resolve()?.quantile(p)?,
        OracleQuery::Es { dist, p } => dist.resolve()?.expected_shortfall(p)?,
        OracleQuery::ExpectedDiff { dist, p, q2, c, sigma } => {
            let d = dist.resolve()?;
            match (q2, c) {
                (Some(q2), _) => oracle::expected_diff_dynamic(sigma, &d, d.quantile(p)?, q2, p)?,
                (None, Some(c)) => sigma * oracle::expected_diff_vol_misspec(&d, p, c)?,
                (None, None) => unreachable!("clap requires --q2 or --c"),
            }
        }
        OracleQuery::VarianceFormula { cov, index } => {
            oracle::variance_of_centered_differential(&parse_matrix(&cov)?, index)?
        }
    };
    writeln!(out, "{value}")?;
    Ok(())
}
