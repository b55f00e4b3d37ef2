mod common;

use common::random_correlation;
use corrfilter_core::rie::{self, AutocorrKernel, Regularization};
use corrfilter_core::SymmetricMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn filters(e: &SymmetricMatrix, q: f64) -> Vec<SymmetricMatrix> {
    let reg = Regularization::for_dim(e.dim());
    vec![
        rie::naive(e).unwrap().filtered,
        rie::clip_rmt(e, q).unwrap().filtered,
        rie::lp_shrink(e, q, reg).unwrap().filtered,
        rie::bj_shrink(e, q, 3.0, reg).unwrap().filtered,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn rotational_estimators_commute_with_permutations(
        (p, n, seed) in (4usize..=24, 40usize..100, any::<u64>()),
        shuffle in any::<u64>(),
    ) {
        let e = random_correlation(p, n, seed);
        let q = p as f64 / n as f64;
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        for (a, b) in filters(&e.permuted(&perm), q).iter().zip(filters(&e, q)) {
            prop_assert!(a.max_abs_diff(&b.permuted(&perm)) < 1e-8);
        }
    }

    #[test]
    fn white_kernel_reproduces_lp((p, n, seed) in (2usize..=40, 20usize..120, any::<u64>())) {
        let e = random_correlation(p, n, seed);
        let q = p as f64 / n as f64;
        let reg = Regularization::for_dim(p);
        let lp = rie::lp_shrink(&e, q, reg).unwrap();
        let bj = rie::bj_shrink_with_kernel(&e, q, AutocorrKernel::White, reg).unwrap();
        prop_assert_eq!(lp.fallbacks, bj.fallbacks);
        for (a, b) in lp.xi.iter().zip(&bj.xi) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shrunk_values_are_nonnegative_and_reproducible((p, n, seed) in (2usize..=30, 20usize..100, any::<u64>())) {
        let e = random_correlation(p, n, seed);
        let q = p as f64 / n as f64;
        let reg = Regularization::for_dim(p);
        let bj = rie::bj_shrink(&e, q, 3.0, reg).unwrap();
        prop_assert!(bj.xi.iter().all(|&x| x >= 0.0));
        prop_assert_eq!(&bj, &rie::bj_shrink(&e, q, 3.0, reg).unwrap());
        let lp = rie::lp_shrink(&e, q, reg).unwrap();
        prop_assert!(lp.xi.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn clipping_preserves_trace((p, n, seed) in (2usize..=30, 20usize..100, any::<u64>()), k in 1usize..30) {
        let e = random_correlation(p, n, seed);
        let r = rie::clip_k(&e, k.min(p)).unwrap();
        prop_assert!((r.xi.iter().sum::<f64>() - p as f64).abs() < 1e-9);
    }
}
