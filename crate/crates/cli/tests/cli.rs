use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tailcomp_core::bootstrap::default_block_length;
use tailcomp_core::distributions::InnovationDistribution;
use tailcomp_core::eqtest::{dm_test, VarianceEstimator};
use tailcomp_core::mcs::{run_mcs, LossMatrix, McsConfig, McsStatistic};
use tailcomp_core::oracle;
use tailcomp_core::rng::Stream;
use tailcomp_core::scoring::{gpl_loss, joint_loss, JointLossSpec, Parametrization, QuantileLossSpec};

fn tailcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailcomp"))
        .args(args)
        .output()
        .expect("run tailcomp")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn value(o: &Output) -> f64 {
    stdout(o).trim().parse().unwrap()
}

#[test]
fn score_matches_library_losses() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "fc.csv", "y,var,es\n-1.5,-1.5,-2\n-3.0,-2.6,-3.1\n-1.0,-2.5,-3.2\n");
    let out = stdout(&tailcomp(&["score", "--input", &f, "--loss", "gpl", "--p", "0.05"]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,loss"));
    assert_eq!(lines.next(), Some("1,0"));
    let tick = QuantileLossSpec::tick(0.05).unwrap();
    assert_eq!(lines.next().unwrap(), format!("2,{}", gpl_loss(&tick, -2.6, -3.0)));

    let out = stdout(&tailcomp(&["score", "--input", &f, "--loss", "al", "--p", "0.025"]));
    let al = JointLossSpec::new(0.025, Parametrization::Al).unwrap();
    let last = out.lines().last().unwrap();
    assert_eq!(last, format!("3,{}", joint_loss(&al, -2.5, -3.2, -1.0).unwrap()));
    let v: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 1.9697).abs() < 1e-4);
}

#[test]
fn joint_score_without_es_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "fc.csv", "y,var\n-1,-2\n");
    let o = tailcomp(&["score", "--input", &f, "--loss", "fzg", "--p", "0.025"]);
    assert_eq!(o.status.code(), Some(2));
}

fn loss_pairs(shift: f64, n: usize) -> String {
    let mut s = Stream::from_seed(12);
    let a = InnovationDistribution::StandardNormal.sample(n, &mut s);
    let b = InnovationDistribution::StandardNormal.sample(n, &mut s);
    let mut text = String::from("loss_a,loss_b\n");
    for (x, y) in a.iter().zip(&b) {
        text.push_str(&format!("{},{}\n", x + shift, y));
    }
    text
}

#[test]
fn dm_verdict_and_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "l.csv", &loss_pairs(0.5, 300));
    let out = stdout(&tailcomp(&["dm", "--input", &f]));
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("# reject"));
    assert_eq!(lines.next(), Some("statistic,pvalue,reject,dbar_sign,mean,variance"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields[2], "true");
    assert_eq!(fields[3], "1");

    let mut rdr = csv::Reader::from_path(&f).unwrap();
    let d: Vec<f64> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            r[0].parse::<f64>().unwrap() - r[1].parse::<f64>().unwrap()
        })
        .collect();
    let o = dm_test(&d, 0.05, VarianceEstimator::IidSample, &mut Stream::from_seed(0)).unwrap();
    assert_eq!(fields[0], o.statistic.to_string());

    let out = stdout(&tailcomp(&["dm", "--input", &f, "--estimator", "mbb", "--B", "500", "--seed", "3"]));
    let est = VarianceEstimator::MovingBlockBootstrap {
        resamples: 500,
        block_length: default_block_length(d.len()),
    };
    let o = dm_test(&d, 0.05, est, &mut Stream::from_seed(3)).unwrap();
    assert!(out.lines().nth(2).unwrap().starts_with(&format!("{},", o.statistic)));
}

#[test]
fn dm_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let equal = write(dir.path(), "eq.csv", "loss_a,loss_b\n1,1\n2,2\n3,3\n");
    assert_eq!(tailcomp(&["dm", "--input", &equal]).status.code(), Some(2));
    let constant = write(dir.path(), "c.csv", "loss_a,loss_b\n1,0\n2,1\n3,2\n");
    assert_eq!(tailcomp(&["dm", "--input", &constant]).status.code(), Some(2));
    let f = write(dir.path(), "l.csv", &loss_pairs(0.0, 50));
    assert_eq!(tailcomp(&["dm", "--input", &f, "--estimator", "mbb"]).status.code(), Some(2));
}

#[test]
fn mcs_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Stream::from_seed(5);
    let n = 300;
    let cols: Vec<Vec<f64>> = [0.0, 0.0, 1.0]
        .iter()
        .map(|shift| {
            InnovationDistribution::StandardNormal
                .sample(n, &mut s)
                .into_iter()
                .map(|v| v + shift)
                .collect()
        })
        .collect();
    let mut text = String::from("a,b,bad\n");
    for t in 0..n {
        text.push_str(&format!("{},{},{}\n", cols[0][t], cols[1][t], cols[2][t]));
    }
    let f = write(dir.path(), "wide.csv", &text);
    let out = stdout(&tailcomp(&["mcs", "--input", &f, "--B", "400", "--seed", "9"]));

    let lm = LossMatrix::new(cols, vec!["a".into(), "b".into(), "bad".into()]).unwrap();
    let res = run_mcs(
        &lm,
        &McsConfig {
            alpha: 0.1,
            statistic: McsStatistic::Tmax,
            resamples: 400,
            block_length: default_block_length(n),
            seed: 9,
        },
    )
    .unwrap();
    let mut expected = Vec::new();
    res.write_csv(&mut expected).unwrap();
    assert_eq!(out.as_bytes(), expected.as_slice());
    assert!(out.starts_with("model_label,eliminated_step,step_pvalue,mcs_pvalue,survived\n"));
    assert!(!res.contains("bad"));
}

#[test]
fn mcs_identical_columns_keep_everything() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "w.csv", "a,b\n1,1\n2,2\n0.5,0.5\n3,3\n");
    let out = stdout(&tailcomp(&["mcs", "--input", &f, "--B", "50", "--seed", "1"]));
    assert_eq!(out.lines().filter(|l| l.ends_with(",true")).count(), 2);
}

#[test]
fn oracle_queries_match_library() {
    let t4 = InnovationDistribution::standardized_t(4.0).unwrap();
    let q = value(&tailcomp(&["oracle", "quantile", "--p", "0.01"]));
    assert_eq!(q, t4.quantile(0.01).unwrap());
    let e = value(&tailcomp(&["oracle", "es", "--dist", "n", "--p", "0.025"]));
    assert_eq!(e, InnovationDistribution::StandardNormal.expected_shortfall(0.025).unwrap());

    let q2 = InnovationDistribution::StandardNormal.quantile(0.01).unwrap();
    let d = value(&tailcomp(&[
        "oracle", "expected-diff", "--p", "0.01", "--q2", &q2.to_string(), "--sigma", "2",
    ]));
    assert_eq!(d, oracle::expected_diff_dynamic(2.0, &t4, q, q2, 0.01).unwrap());
    let v = value(&tailcomp(&["oracle", "expected-diff", "--p", "0.05", "--c", "1.2"]));
    assert_eq!(v, oracle::expected_diff_vol_misspec(&t4, 0.05, 1.2).unwrap());

    let w = value(&tailcomp(&["oracle", "variance-formula", "--cov", "2,0.5;0.5,1", "--index", "0"]));
    assert!((w - 0.25 * (2.0 + 1.0 - 1.0)).abs() < 1e-14);
    assert_eq!(tailcomp(&["oracle", "variance-formula", "--cov", "1,2;2,1", "--index", "0"]).status.code(), Some(2));
}

const MINIMAL: &str = r#"
scenario = "static_distributional"
p_levels = [0.01, 0.1]
P_sizes = [251, 500]
nu = 4
replications = 200
[scoring]
family = "gpl"
"#;

#[test]
fn experiment_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", MINIMAL);
    let out = dir.path().join("out");
    let o = tailcomp(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7"]);
    stdout(&o);
    let pairwise = fs::read_to_string(out.join("pairwise.csv")).unwrap();
    assert_eq!(pairwise.lines().count(), 1 + 4);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("master_seed=7"));
    assert!(manifest.contains("files=pairwise.csv,tstat_summary.csv,oracle.csv"));
}

#[test]
fn experiment_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        r#"
scenario = "mcs_m5"
p_levels = [0.05, 0.1]
P_sizes = [63, 251]
nu = 3
alpha = 0.25
replications = 30
B = 200
oracle_length = 1000000
[scoring]
family = "gpl"
"#,
    );
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let out = dir.path().join(format!("w{workers}"));
        stdout(&tailcomp(&[
            "experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "2", "--workers", workers,
        ]));
        let files: Vec<Vec<u8>> = ["mcs.csv", "rejections.csv", "signs.csv", "oracle.csv"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn experiment_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let cfg = write(dir.path(), "c.toml", MINIMAL);
    assert_eq!(tailcomp(&["experiment", "--config", &cfg, "--out", out]).status.code(), Some(2));

    let bad = write(dir.path(), "bad.toml", &MINIMAL.replace("nu = 4", "nu = 4\ncolour = 1"));
    let o = tailcomp(&["experiment", "--config", &bad, "--out", out, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let seeded = write(dir.path(), "s.toml", &format!("master_seed = 3\n{MINIMAL}"));
    let o = tailcomp(&["experiment", "--config", &seeded, "--out", out, "--seed", "4"]);
    assert_eq!(o.status.code(), Some(2));
}
