mod common;

use common::*;
use dhlcm::clustering::{
    hetero_clustering_matrix, kmeans, misclustering_rate, misclustering_rate_assignment, misclustering_rate_enumerate,
    normalize_rows, rand_index, ClusteringOptions, NormalizationMode,
};
use dhlcm::spectral::plain_svd;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn random_labels(g: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| g.random_range(0..k)).collect()
}

#[test]
fn assignment_equals_enumeration_on_random_pairs() {
    let mut g = rng(2024);
    for _ in 0..1000 {
        let k = g.random_range(1..=6);
        let n = g.random_range(1..40);
        let s = random_labels(&mut g, n, k);
        let t = random_labels(&mut g, n, k);
        let a = misclustering_rate_assignment(&s, &t).unwrap();
        let e = misclustering_rate_enumerate(&s, &t).unwrap();
        assert_eq!(a, e, "s={s:?} t={t:?}");
    }
}

#[test]
fn misclustering_matches_brute_force_on_all_small_labelings() {
    // every labeling of 6 subjects into 3 classes against a fixed truth
    let truth = [0, 0, 1, 1, 2, 2];
    for code in 0..3usize.pow(6) {
        let t: Vec<usize> = (0..6).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let h = misclustering_rate(&truth, &t).unwrap();
        assert_eq!(h, brute_misclustering(&truth, &t, 3), "t={t:?}");
    }
}

#[test]
fn noiseless_rows_sit_on_orthogonal_points() {
    let fx = noiseless(60, 120, 3, 17);
    let u = plain_svd(&fx.r, 3).unwrap().u;
    let rows = normalize_rows(&u, NormalizationMode::L2).unwrap();
    for i in 0..60 {
        for j in 0..60 {
            let d = (rows.row(i) - rows.row(j)).norm();
            if fx.labels[i] == fx.labels[j] {
                assert!(d < 1e-8);
            } else {
                assert!((d - 2f64.sqrt()).abs() < 1e-8, "{d}");
            }
        }
    }
}

#[test]
fn noiseless_clustering_is_exact() {
    for seed in 0..5 {
        let fx = noiseless(60, 120, 3, seed);
        let (a, _) = hetero_clustering_matrix(&fx.r, 3, &ClusteringOptions::default()).unwrap();
        assert_eq!(misclustering_rate(&fx.labels, &a.labels).unwrap(), 0.0);
        assert_eq!(rand_index(&fx.labels, &a.labels).unwrap(), 1.0);
    }
}

#[test]
fn kmeans_is_bitwise_deterministic() {
    let mut g = rng(3);
    let pts = DMatrix::from_fn(80, 3, |_, _| g.random_range(-1.0..1.0));
    let a = kmeans(&pts, 4, 20, 300, 99).unwrap();
    let b = kmeans(&pts, 4, 20, 300, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relabeling_is_free(labels in prop::collection::vec(0usize..4, 2..40), perm in Just([2usize, 0, 3, 1]).prop_shuffle()) {
        let permuted: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        prop_assert_eq!(misclustering_rate(&labels, &permuted).unwrap(), 0.0);
        prop_assert_eq!(rand_index(&labels, &permuted).unwrap(), 1.0);
    }

    #[test]
    fn metrics_are_symmetric(a in prop::collection::vec(0usize..3, 2..30), seed in any::<u64>()) {
        let mut g = rng(seed);
        let b = random_labels(&mut g, a.len(), 3);
        prop_assert_eq!(rand_index(&a, &b).unwrap(), rand_index(&b, &a).unwrap());
        prop_assert_eq!(misclustering_rate(&a, &b).unwrap(), misclustering_rate(&b, &a).unwrap());
    }

    #[test]
    fn column_sign_flips_do_not_change_labels(flips in prop::collection::vec(any::<bool>(), 3), seed in 0u64..50) {
        let mut g = rng(seed);
        let centers = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let u = DMatrix::from_fn(45, 3, |i, c| centers[i % 3][c] + 0.05 * g.random_range(-1.0..1.0));
        let mut flipped = u.clone();
        for (c, &f) in flips.iter().enumerate() {
            if f {
                flipped.column_mut(c).neg_mut();
            }
        }
        for mode in [NormalizationMode::L2, NormalizationMode::None] {
            let a = kmeans(&normalize_rows(&u, mode).unwrap(), 3, 10, 300, 5).unwrap();
            let b = kmeans(&normalize_rows(&flipped, mode).unwrap(), 3, 10, 300, 5).unwrap();
            prop_assert_eq!(a.labels, b.labels);
        }
    }
}
