mod common;

use proptest::prelude::*;

use tailcomp_core::distributions::InnovationDistribution;
use tailcomp_core::oracle::{
    expected_diff_vol_misspec, expected_tick_diff_static, expected_tick_loss, prob_correct_sign,
    variance_of_centered_differential,
};
use tailcomp_core::rng::Stream;
use tailcomp_core::scoring::{gpl_loss, QuantileLossSpec};

#[test]
fn closed_form_differentials_match_monte_carlo() {
    for (label, z) in common::oracle_mc_zscores(1_000_000, 11) {
        assert!(z.abs() < 3.0, "{label}: z = {z}");
    }
}

#[test]
fn centered_variance_formula_on_random_psd_matrices() {
    let err = common::variance_formula_max_error(1000, 5);
    assert!(err < 1e-10, "max error {err}");
}

#[test]
fn centered_variance_rejects_non_psd() {
    let cov = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
    assert!(variance_of_centered_differential(&cov, 0).is_err());
    let asym = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
    assert!(variance_of_centered_differential(&asym, 0).is_err());
}

#[test]
fn gpl_losses_are_minimized_at_the_true_quantile() {
    let bad = common::gpl_grid_failures();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn joint_losses_are_minimized_at_the_true_pair() {
    let bad = common::joint_grid_failures();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn sign_share_by_enumeration() {
    let dist = common::t4();
    let p = 0.01;
    let spec = QuantileLossSpec::tick(p).unwrap();
    let x1 = dist.quantile(p).unwrap();
    let x2 = InnovationDistribution::StandardNormal.quantile(p).unwrap();
    let cut = x2 - p * (x2 - x1);
    let ys = dist.sample(400_000, &mut Stream::from_seed(3));
    let mut negative = 0usize;
    for &y in &ys {
        let d = gpl_loss(&spec, x1, y) - gpl_loss(&spec, x2, y);
        if (y - cut).abs() > 1e-9 {
            assert_eq!(d > 0.0, y > cut, "y = {y}");
        }
        negative += (d < 0.0) as usize;
    }
    let share = negative as f64 / ys.len() as f64;
    let exact = prob_correct_sign(&dist, x1, x2, p).unwrap();
    let se = (exact * (1.0 - exact) / ys.len() as f64).sqrt();
    assert!((share - exact).abs() < 4.0 * se, "{share} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn static_difference_is_a_difference_of_expected_losses(
        nu in prop::sample::select(vec![3.0, 4.0, 7.0, 12.0]),
        p in prop::sample::select(vec![0.01, 0.025, 0.05, 0.1]),
        shift in -1.0f64..1.0,
    ) {
        let dist = InnovationDistribution::standardized_t(nu).unwrap();
        let q = dist.quantile(p).unwrap();
        let x2 = q + shift;
        let diff = expected_tick_diff_static(&dist, q, x2, p).unwrap();
        let direct = expected_tick_loss(&dist, q, p).unwrap() - expected_tick_loss(&dist, x2, p).unwrap();
        prop_assert!((diff - direct).abs() < 1e-10);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn volatility_misspecification_matches_scaled_static_forecast(
        p in prop::sample::select(vec![0.01, 0.025, 0.05, 0.1]),
        c in 0.5f64..2.0,
    ) {
        let dist = common::t4();
        let q = dist.quantile(p).unwrap();
        let vol = expected_diff_vol_misspec(&dist, p, c).unwrap();
        let stat = expected_tick_diff_static(&dist, q, c * q, p).unwrap();
        prop_assert!((vol - stat).abs() < 1e-8, "{} vs {}", vol, stat);
    }
}
