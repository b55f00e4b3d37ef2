mod common;

use common::{dim_and_seed, random_spd};
use corrfilter_core::linalg::{ipr, reconstruct, sqrt_spd, stieltjes, sym_eigen};
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #[test]
    fn eigen_reconstructs_and_is_orthonormal((p, seed) in dim_and_seed(30)) {
        let m = random_spd(p, seed);
        let d = sym_eigen(&m).unwrap();
        prop_assert!(d.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        let back = reconstruct(&d, d.eigenvalues()).unwrap();
        prop_assert!(back.max_abs_diff(&m) < 1e-10);
        let v = &d.eigenvectors;
        let gram = v.transpose() * v;
        let err = (gram - nalgebra::DMatrix::identity(p, p)).abs().max();
        prop_assert!(err < 1e-10, "{}", err);
    }

    #[test]
    fn eigen_is_deterministic((p, seed) in dim_and_seed(20)) {
        let m = random_spd(p, seed);
        prop_assert_eq!(sym_eigen(&m).unwrap(), sym_eigen(&m).unwrap());
    }

    #[test]
    fn ipr_within_bounds((p, seed) in dim_and_seed(30)) {
        let d = sym_eigen(&random_spd(p, seed)).unwrap();
        for i in 0..p {
            let v = ipr(d.eigenvector(i)).unwrap();
            prop_assert!(v >= 1.0 / p as f64 - 1e-12 && v <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn square_root_squares_back((p, seed) in dim_and_seed(25)) {
        let m = random_spd(p, seed);
        let r = sqrt_spd(&m).unwrap();
        let sq = r.as_matrix() * r.as_matrix();
        prop_assert!((sq - m.as_matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn stieltjes_is_conjugate_symmetric(
        eigs in prop::collection::vec(0.0f64..5.0, 1..40),
        re in -1.0f64..6.0,
        im in 0.01f64..2.0,
    ) {
        let z = Complex64::new(re, im);
        let a = stieltjes(&eigs, z).unwrap();
        let b = stieltjes(&eigs, z.conj()).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-12);
        prop_assert!(a.im < 0.0);
    }
}
