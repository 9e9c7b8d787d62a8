mod common;

use common::*;
use dhlcm::inference::{
    benjamini_hochberg, chi_max_pvalue, chi_max_threshold, feature_stat, gumbel_center, gumbel_threshold,
};
use dhlcm::special::{chi2_quantile, gumbel_quantile, ln_gamma};
use dhlcm::{global_test, Regime, RegimeChoice};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn bh_matches_subset_enumeration() {
    let mut g = rng(11);
    for _ in 0..1000 {
        let m = g.random_range(1..=12);
        let p: Vec<f64> = (0..m)
            .map(|_| if g.random_bool(0.3) { g.random_range(0.0..0.01) } else { g.random::<f64>() })
            .collect();
        let alpha = [0.05, 0.1, 0.2][g.random_range(0..3)];
        assert_eq!(benjamini_hochberg(&p, alpha).unwrap(), brute_bh(&p, alpha), "p={p:?}");
    }
}

#[test]
fn bh_handles_ties() {
    assert_eq!(benjamini_hochberg(&[0.04, 0.04, 0.04], 0.05).unwrap(), vec![0, 1, 2]);
    assert_eq!(brute_bh(&[0.04, 0.04, 0.04], 0.05), vec![0, 1, 2]);
    assert!(benjamini_hochberg(&[], 0.05).unwrap().is_empty());
}

#[test]
fn chi2_quantile_agrees_with_quadrature() {
    for p in [0.5, 0.9, 0.95, 0.99, 0.999, 0.9999] {
        let a = chi2_quantile(p, 1.0);
        let b = chi2_1_quantile_simpson(p);
        assert!((a - b).abs() < 1e-8 * b.max(1.0), "p={p}: {a} vs {b}");
    }
}

#[test]
fn reference_constants() {
    assert!((chi2_quantile(0.95, 1.0) - 3.841_458_820_694_124).abs() < 1e-10);
    assert!((chi2_quantile(0.99, 1.0) - 6.634_896_601_021_214).abs() < 1e-10);
    assert!((ln_gamma(0.1) - 2.252_712_651_734_206).abs() < 1e-12);
    assert!((gumbel_quantile(0.95) - 2.970_195_249_042_164).abs() < 1e-12);
}

#[test]
fn thresholds_for_ten_features_three_classes() {
    let q = chi_max_threshold(10, 3, 0.05).unwrap();
    assert!((q - 9.839_202_290_333_914).abs() < 1e-8, "{q}");
    // q solves F(q)^30 = 0.95 under the quadrature CDF as well
    assert!((chi2_1_cdf_simpson(q).powi(30) - 0.95).abs() < 1e-9);
    assert!((chi_max_pvalue(q, 10, 3) - 0.05).abs() < 1e-12);

    assert!((gumbel_center(10, 3).unwrap() - 4.433_537_336_773_37).abs() < 1e-10);
    assert!((gumbel_threshold(10, 3, 0.05).unwrap() - 10.373_927_834_857_696).abs() < 1e-9);
    assert!((gumbel_threshold(10, 3, 0.1).unwrap() - 8.934_271_991_398_258).abs() < 1e-9);
}

fn null_draw(g: &mut impl Rng, m: usize, k: usize, sigma2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, k, |_, _| {
        let z: f64 = StandardNormal.sample(g);
        0.5 + sigma2.sqrt() * z
    })
}

#[test]
fn chi_max_size_is_exact_for_independent_pairs() {
    // with K = 2 every feature contributes one independent chi2_1 statistic
    let (m, k, reps) = (10, 2, 20_000);
    let sigma2 = DMatrix::from_element(m, k, 1e-4);
    let features: Vec<usize> = (0..m).collect();
    let mut g = rng(5);
    let mut rejections = 0;
    for _ in 0..reps {
        let theta = null_draw(&mut g, m, k, 1e-4);
        let r = global_test(&theta, &sigma2, &features, 0.05, RegimeChoice::ChiSquareMax).unwrap();
        rejections += r.reject as usize;
    }
    let rate = rejections as f64 / reps as f64;
    let se = (0.05f64 * 0.95 / reps as f64).sqrt();
    assert!((rate - 0.05).abs() < 4.0 * se, "{rate}");
}

#[test]
fn chi_max_is_conservative_with_shared_classes() {
    let (m, k, reps) = (1, 3, 20_000);
    let sigma2 = DMatrix::from_element(m, k, 1e-4);
    let mut g = rng(6);
    let mut rejections = 0;
    for _ in 0..reps {
        let theta = null_draw(&mut g, m, k, 1e-4);
        rejections += global_test(&theta, &sigma2, &[0], 0.05, RegimeChoice::ChiSquareMax).unwrap().reject as usize;
    }
    let rate = rejections as f64 / reps as f64;
    assert!(rate < 0.05 && rate > 0.03, "{rate}");
}

#[test]
fn auto_regime_switches_at_thirty_tests() {
    let sigma2 = DMatrix::from_element(11, 3, 1e-3);
    let theta = DMatrix::from_element(11, 3, 0.5);
    let ten: Vec<usize> = (0..10).collect();
    let eleven: Vec<usize> = (0..11).collect();
    assert_eq!(global_test(&theta, &sigma2, &ten, 0.05, RegimeChoice::Auto).unwrap().regime, Regime::ChiSquareMax);
    assert_eq!(global_test(&theta, &sigma2, &eleven, 0.05, RegimeChoice::Auto).unwrap().regime, Regime::Gumbel);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn class_relabeling_leaves_statistics_unchanged(
        seed in any::<u64>(),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let mut g = rng(seed);
        let theta = DMatrix::from_fn(6, 4, |_, _| g.random_range(0.05..0.9));
        let sigma2 = DMatrix::from_fn(6, 4, |_, _| g.random_range(1e-4..1e-2));
        let pt = DMatrix::from_fn(6, 4, |r, c| theta[(r, perm[c])]);
        let ps = DMatrix::from_fn(6, 4, |r, c| sigma2[(r, perm[c])]);
        for j in 0..6 {
            prop_assert_eq!(feature_stat(&theta, &sigma2, j).unwrap(), feature_stat(&pt, &ps, j).unwrap());
        }
        let all: Vec<usize> = (0..6).collect();
        let a = global_test(&theta, &sigma2, &all, 0.05, RegimeChoice::Auto).unwrap();
        let b = global_test(&pt, &ps, &all, 0.05, RegimeChoice::Auto).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bh_rejections_grow_with_alpha(p in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let small = benjamini_hochberg(&p, 0.05).unwrap();
        let large = benjamini_hochberg(&p, 0.2).unwrap();
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }

    #[test]
    fn thresholds_increase_with_test_count(m in 1usize..200, k in 2usize..8) {
        prop_assert!(chi_max_threshold(m + 1, k, 0.05).unwrap() > chi_max_threshold(m, k, 0.05).unwrap());
        prop_assert!(chi_max_threshold(m, k, 0.01).unwrap() > chi_max_threshold(m, k, 0.05).unwrap());
    }
}
