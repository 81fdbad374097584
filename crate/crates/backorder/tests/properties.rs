//! Property tests for the cross-cutting invariants: split stratification,
//! metric identities, rank-statistic identities, and SMOTE geometry.

use proptest::prelude::*;

use backorder::dataset::{generate_synthetic, split, write_csv, SyntheticSpec};
use backorder::evaluate::{confusion, roc_auc};
use backorder::stats::{chi_square, mann_whitney_u};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Stratified splits keep each partition's class proportion within one
    /// row of the global proportion.
    #[test]
    fn stratified_split_proportions(
        n_rows in 20usize..400,
        positive_rate in 0.05f64..0.45,
        fraction in 0.1f64..0.9,
        seed in 0u64..1000,
    ) {
        let table = generate_synthetic(&SyntheticSpec {
            n_rows,
            positive_rate,
            n_informative: 2,
            seed,
        }).unwrap();
        let labels = table.labels();
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(n_pos >= 1 && n_pos < n_rows);
        let s = split(&table, fraction, seed, true).unwrap();
        let global = n_pos as f64 / n_rows as f64;
        for part in [&s.train, &s.test] {
            if part.is_empty() {
                continue;
            }
            let part_pos = part.iter().filter(|&&i| labels[i] == 1).count();
            let expected = global * part.len() as f64;
            prop_assert!(
                (part_pos as f64 - expected).abs() <= 1.0 + 1e-9,
                "partition of {} rows has {} positives, expected about {:.2}",
                part.len(), part_pos, expected
            );
        }
        // disjoint and exhaustive
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n_rows);
    }

    /// ROC-AUC is invariant under strictly increasing transforms and flips
    /// under negation (tie-free scores).
    #[test]
    fn roc_auc_rank_invariance(
        scores in prop::collection::vec(-50.0f64..50.0, 4..80),
        labels_seed in 0u64..100,
        scale in 0.1f64..5.0,
    ) {
        let mut seen = scores.clone();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        prop_assume!(seen.len() == scores.len()); // tie-free
        let y: Vec<u8> = scores
            .iter()
            .enumerate()
            .map(|(i, _)| u8::from((i as u64).wrapping_mul(labels_seed + 7) % 3 == 0))
            .collect();
        let pos = y.iter().filter(|&&v| v == 1).count();
        prop_assume!(pos > 0 && pos < y.len());
        let auc = roc_auc(&y, &scores).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|&s| (scale * s).tanh() * 10.0 + s * scale).collect();
        prop_assert_eq!(auc, roc_auc(&y, &transformed).unwrap());
        let negated: Vec<f64> = scores.iter().map(|&s| -s).collect();
        prop_assert!((auc + roc_auc(&y, &negated).unwrap() - 1.0).abs() < 1e-12);
    }

    /// The two one-sided U statistics always add to n1 * n2, ties included.
    #[test]
    fn mann_whitney_u_identity(
        x in prop::collection::vec(0u8..12, 1..30),
        y in prop::collection::vec(0u8..12, 1..30),
    ) {
        let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let ux = mann_whitney_u(&xf, &yf).unwrap().statistic;
        let uy = mann_whitney_u(&yf, &xf).unwrap().statistic;
        prop_assert!((ux + uy - (x.len() * y.len()) as f64).abs() < 1e-9);
    }

    /// chi_square(a, b) = chi_square(b, a), bit for bit.
    #[test]
    fn chi_square_symmetry(
        bits in prop::collection::vec((0u8..2, 0u8..2), 8..120),
    ) {
        let a: Vec<f64> = bits.iter().map(|&(v, _)| f64::from(v)).collect();
        let b: Vec<f64> = bits.iter().map(|&(_, v)| f64::from(v)).collect();
        match (chi_square(&a, &b), chi_square(&b, &a)) {
            (Ok(ab), Ok(ba)) => {
                prop_assert_eq!(ab.statistic.to_bits(), ba.statistic.to_bits());
                prop_assert_eq!(ab.p_value.to_bits(), ba.p_value.to_bits());
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }

    /// Confusion counts always partition the evaluated rows.
    #[test]
    fn confusion_partitions_rows(
        probs in prop::collection::vec(0.0f64..=1.0, 1..200),
        threshold in 0.0f64..=1.0,
        label_seed in 0u64..50,
    ) {
        let y: Vec<u8> = probs
            .iter()
            .enumerate()
            .map(|(i, _)| u8::from((i as u64 + label_seed) % 4 == 0))
            .collect();
        let cm = confusion(&y, &probs, threshold).unwrap();
        prop_assert_eq!(cm.total(), probs.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// CSV write/load preserves values, the missing mask, and encodings.
    #[test]
    fn csv_round_trip(n_rows in 10usize..120, seed in 0u64..500) {
        let table = generate_synthetic(&SyntheticSpec {
            n_rows,
            positive_rate: 0.2,
            n_informative: 3,
            seed,
        }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&table, &path).unwrap();
        let reloaded = backorder::dataset::load_csv(&path, &backorder::dataset::inventory_schema()).unwrap();
        prop_assert_eq!(table, reloaded);
    }
}
