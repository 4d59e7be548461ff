use proptest::prelude::*;
use quicfed_core::metrics::{macro_f1, stability};
use quicfed_core::{ConfusionMatrix, NUM_CLASSES};

fn matrix() -> impl Strategy<Value = [[u64; NUM_CLASSES]; NUM_CLASSES]> {
    proptest::array::uniform7(proptest::array::uniform7(prop_oneof![3 => Just(0u64), 2 => 0u64..40]))
}

fn is_diagonal(c: &[[u64; NUM_CLASSES]; NUM_CLASSES]) -> bool {
    (0..NUM_CLASSES).all(|i| (0..NUM_CLASSES).all(|j| i == j || c[i][j] == 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn macro_f1_is_bounded_and_one_only_when_diagonal(counts in matrix()) {
        let cm = ConfusionMatrix::from_counts(counts);
        match macro_f1(&cm) {
            Err(_) => prop_assert_eq!(cm.total(), 0),
            Ok(f1) => {
                prop_assert!((0.0..=1.0).contains(&f1));
                prop_assert_eq!(f1 == 1.0, is_diagonal(&counts));
            }
        }
    }

    #[test]
    fn macro_f1_ignores_class_relabelling(counts in matrix(), perm in Just((0..NUM_CLASSES).collect::<Vec<_>>()).prop_shuffle()) {
        let mut relabelled = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for i in 0..NUM_CLASSES {
            for j in 0..NUM_CLASSES {
                relabelled[perm[i]][perm[j]] = counts[i][j];
            }
        }
        let a = macro_f1(&ConfusionMatrix::from_counts(counts));
        let b = macro_f1(&ConfusionMatrix::from_counts(relabelled));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert!(a.is_err() && b.is_err()),
        }
    }

    #[test]
    fn confusion_counts_every_prediction(pairs in proptest::collection::vec((0u8..7, 0u8..7), 0..300)) {
        let (truth, pred): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let cm = ConfusionMatrix::from_predictions(&truth, &pred);
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        prop_assert_eq!(&cm, &ConfusionMatrix::from_predictions(&truth, &pred));
        for k in 0..NUM_CLASSES {
            prop_assert_eq!(cm.support(k), truth.iter().filter(|&&t| t as usize == k).count() as u64);
        }
    }

    #[test]
    fn stability_summary_is_consistent(series in proptest::collection::vec(0.0f64..1.0, 1..60)) {
        let s = stability(&series, 0..=series.len() - 1).unwrap();
        prop_assert!(s.std >= 0.0);
        prop_assert!(s.min <= s.mean + 1e-12);
        prop_assert_eq!(s.count, series.len());
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean <= max + 1e-12);
        prop_assert!(s.std <= (max - s.min) / 2.0 + 1e-12);
    }
}
