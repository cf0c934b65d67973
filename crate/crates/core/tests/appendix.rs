//! Censoring and sojourn-time identities on random transient generators.

use coxqueue::linalg::{self, Matrix};
use coxqueue::oracle;
use coxqueue::qsf;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn censoring_identities_hold(order in 2usize..=8, seed in any::<u64>()) {
        let q = oracle::random_transient_generator(order, seed);
        for s in 0..order {
            let report = oracle::censoring_identity_check(&q, s).unwrap();
            prop_assert!(report.relative_error() < 1e-10, "{:?}", report);
        }
    }

    #[test]
    fn sojourn_series_converges(order in 2usize..=8, seed in any::<u64>()) {
        let q = oracle::random_transient_generator(order, seed);
        // Nearly closed generators have huge sojourn times, so the error is
        // measured relative to them.
        let report = oracle::sojourn_series_check_to(&q, 1e-12, 2_000_000).unwrap();
        prop_assert!(report.relative_error < 1e-10, "{:?}", report);
        prop_assert!(report.remainder_bound < 1e-12);
    }

    #[test]
    fn censored_generator_stays_a_subgenerator(order in 2usize..=8, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let q = oracle::random_transient_generator(order, seed);
        let s = pick.index(order);
        let censored = qsf::censor_state(&q, s).unwrap();
        prop_assert_eq!(censored.rows(), order - 1);
        for i in 0..order - 1 {
            let row = censored.row(i);
            prop_assert!(row.iter().sum::<f64>() <= 1e-12);
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    prop_assert!(v >= 0.0);
                }
            }
        }
    }
}

#[test]
fn censoring_preserves_sojourn_block() {
    // The kept block of −Q⁻¹ equals the inverse of the censored generator.
    let q = oracle::random_transient_generator(5, 3);
    let tau = linalg::invert(&q.scaled(-1.0)).unwrap();
    let censored = qsf::censor_state(&q, 2).unwrap();
    let tau_c = linalg::invert(&censored.scaled(-1.0)).unwrap();
    let kept = [0, 1, 3, 4];
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate() {
            assert!((tau_c[(a, b)] - tau[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn generator_without_leak_is_rejected() {
    let q = Matrix::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
    assert!(oracle::sojourn_series_check(&q, 10).is_err());
}
