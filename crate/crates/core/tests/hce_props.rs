mod common;

use common::random_correlation;
use corrfilter_core::hce::{alca_filter, average_linkage, cophenetic, second_step, Dissimilarity};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn filtered_matrix_is_ultrametric((p, n, seed) in (2usize..=32, 8usize..80, any::<u64>())) {
        let e = random_correlation(p, n, seed);
        let xi = alca_filter(&e).unwrap();
        for i in 0..p {
            prop_assert!((xi.get(i, i) - 1.0).abs() < 1e-12);
            for j in 0..p {
                for k in 0..p {
                    prop_assert!(xi.get(i, j) >= xi.get(i, k).min(xi.get(k, j)) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn filter_is_idempotent((p, n, seed) in (2usize..=32, 8usize..80, any::<u64>())) {
        let once = alca_filter(&random_correlation(p, n, seed)).unwrap();
        let twice = alca_filter(&once).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn merge_heights_are_monotone((p, n, seed) in (2usize..=32, 8usize..80, any::<u64>())) {
        let d = Dissimilarity::from_correlation(&random_correlation(p, n, seed));
        let dend = average_linkage(&d).unwrap();
        prop_assert_eq!(dend.merges.len(), p - 1);
        prop_assert!(dend.merges.windows(2).all(|w| w[0].height <= w[1].height));
        prop_assert!(cophenetic(&dend).ultrametric_violation(1e-12).is_none());
    }

    #[test]
    fn permuting_input_permutes_output(
        (p, n, seed) in (2usize..=20, 30usize..80, any::<u64>()),
        shuffle in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let e = random_correlation(p, n, seed);
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let a = alca_filter(&e.permuted(&perm)).unwrap();
        let b = alca_filter(&e).unwrap().permuted(&perm);
        // Exact ties can legitimately merge in a different order; generic
        // sample matrices have none.
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn second_step_has_unit_diagonal((p, n, seed) in (2usize..=20, 8usize..60, any::<u64>())) {
        let xi = second_step(&random_correlation(p, n, seed)).unwrap();
        prop_assert!(xi.diagonal().iter().all(|d| (d - 1.0).abs() < 1e-12));
    }
}
