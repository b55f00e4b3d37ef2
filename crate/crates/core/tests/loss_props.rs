mod common;

use common::{dim_and_seed, random_spd};
use corrfilter_core::losses::{self, LossKind, PreparedMatrix};
use corrfilter_core::SymmetricMatrix;
use proptest::prelude::*;

/// `K(A, B)` through Cholesky factorizations, no eigendecomposition.
fn dense_kl(a: &SymmetricMatrix, b: &SymmetricMatrix) -> f64 {
    let p = a.dim() as f64;
    let ca = a.as_matrix().clone().cholesky().unwrap();
    let cb = b.as_matrix().clone().cholesky().unwrap();
    let logdet =
        |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let trace = cb.solve(a.as_matrix()).trace();
    0.5 * (logdet(&cb) - logdet(&ca) + trace - p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn losses_vanish_on_equal_arguments((p, seed) in dim_and_seed(30)) {
        let a = PreparedMatrix::new(&random_spd(p, seed)).unwrap();
        for kind in LossKind::ALL {
            let v = losses::evaluate(kind, &a, &a, true).unwrap();
            prop_assert!(v.abs() < 1e-10, "{kind}: {v}");
        }
    }

    #[test]
    fn losses_are_nonnegative((p, s1, s2) in (2usize..=30, any::<u64>(), any::<u64>())) {
        let a = PreparedMatrix::new(&random_spd(p, s1)).unwrap();
        let b = PreparedMatrix::new(&random_spd(p, s2)).unwrap();
        for kind in LossKind::ALL {
            let v = losses::evaluate(kind, &a, &b, true).unwrap();
            prop_assert!(v >= -1e-10, "{kind}: {v}");
        }
    }

    #[test]
    fn scaled_inverse_kl_is_stein((p, s1, s2) in (2usize..=30, any::<u64>(), any::<u64>())) {
        let a = random_spd(p, s1);
        let b = random_spd(p, s2);
        // Stein: (1/p) [Tr(A^-1 B) - log det(A^-1 B) - p]
        let ai = a.as_matrix().clone().try_inverse().unwrap();
        let m = &ai * b.as_matrix();
        let stein = (m.trace() - m.determinant().ln() - p as f64) / p as f64;
        let v = losses::inverse_kl(&a, &b, true).unwrap();
        prop_assert!((v - stein).abs() < 1e-12 * stein.abs().max(1.0), "{} vs {}", v, stein);
    }

    #[test]
    fn kl_matches_dense_solve((p, s1, s2) in (2usize..=20, any::<u64>(), any::<u64>())) {
        let a = random_spd(p, s1);
        let b = random_spd(p, s2);
        let v = losses::kl(&a, &b, false).unwrap();
        prop_assert!((v - dense_kl(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn losses_fail_on_singular_input((p, seed) in dim_and_seed(10)) {
        let a = PreparedMatrix::new(&random_spd(p, seed)).unwrap();
        let mut diag = vec![1.0; p];
        diag[0] = 0.0;
        let z = PreparedMatrix::new(&SymmetricMatrix::from_diagonal(&diag).unwrap()).unwrap();
        prop_assert!(losses::evaluate(LossKind::Kl, &a, &z, true).is_err());
        prop_assert!(losses::evaluate(LossKind::Frobenius, &a, &z, true).is_ok());
    }
}
