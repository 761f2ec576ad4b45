mod common;

use deconfound::theory::{
    closed_form_covariances, expected_mse, expected_mse_general, expected_mse_shift, expected_mse_single,
    expected_mse_two, theorem2_check, Approach,
};
use deconfound::{Matrix, ShiftTheoryParams, TheoryParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn params(seed: u64, p: usize, k: usize) -> TheoryParams {
    common::random_theory_params(&mut ChaCha12Rng::seed_from_u64(seed), p, k)
}

proptest! {
    #[test]
    fn counterfactual_covariance_dominates(seed in any::<u64>(), p in 1usize..5, k in 1usize..4) {
        prop_assert!(theorem2_check(&params(seed, p, k)).unwrap().into_iter().all(|ok| ok));
    }

    #[test]
    fn general_form_is_consistent_with_covariances(seed in any::<u64>(), p in 1usize..5, k in 1usize..4) {
        let t = params(seed, p, k);
        let c = closed_form_covariances(&t).unwrap();
        let m = expected_mse(&t).unwrap();
        prop_assert!(m.mse_c >= -1e-12 && m.mse_c <= 1.0 + 1e-12);
        prop_assert!((m.mse_c - expected_mse_general(&c.cov_xc, &c.cov_xc_y, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_feature_specialization(gamma in -3.0f64..3.0, phi in -0.99f64..0.99, sigma2 in 0.05f64..3.0, gxa in -2.0f64..2.0) {
        let m = expected_mse_single(gamma, phi, sigma2).unwrap();
        prop_assert!(m.mse_c <= m.mse_r);
        let t = TheoryParams {
            gamma_xy: vec![gamma],
            gamma_xa: Matrix::from_row_major(1, 1, vec![gxa]).unwrap(),
            gamma_ya: vec![phi],
            cov_a: Matrix::identity(1),
            sigma_w: Matrix::from_row_major(1, 1, vec![sigma2]).unwrap(),
            var_wy: None,
        };
        let g = expected_mse(&t).unwrap();
        prop_assert!((g.mse_c - m.mse_c).abs() < 1e-12 && (g.mse_r - m.mse_r).abs() < 1e-12);
    }

    #[test]
    fn two_feature_specialization(
        g1 in -3.0f64..3.0, g2 in -3.0f64..3.0, phi in -0.99f64..0.99,
        s11 in 0.1f64..3.0, s22 in 0.1f64..3.0, rho in -0.9f64..0.9,
    ) {
        let s12 = rho * (s11 * s22).sqrt();
        let m = expected_mse_two(g1, g2, phi, s11, s12, s22).unwrap();
        prop_assert!(m.mse_c <= m.mse_r);
        let t = TheoryParams {
            gamma_xy: vec![g1, g2],
            gamma_xa: Matrix::from_row_major(2, 1, vec![0.4, -0.3]).unwrap(),
            gamma_ya: vec![phi],
            cov_a: Matrix::identity(1),
            sigma_w: Matrix::from_row_major(2, 2, vec![s11, s12, s12, s22]).unwrap(),
            var_wy: None,
        };
        let g = expected_mse(&t).unwrap();
        prop_assert!((g.mse_c - m.mse_c).abs() < 1e-12 && (g.mse_r - m.mse_r).abs() < 1e-12);
    }

    #[test]
    fn shift_error_of_counterfactual_ignores_confounder_outcome_covariance(
        bxy in -3.0f64..3.0, bxa in -3.0f64..3.0, b in -1.0f64..1.0, saa in 1.0f64..3.0, say in -0.8f64..0.8,
    ) {
        let base = ShiftTheoryParams { beta_xy: bxy, beta_xa: bxa, sigma2_x: 1.0, sigma_aa: saa, sigma_ay: 0.0, sigma_yy: 1.0, beta_hat_tr: b };
        let moved = ShiftTheoryParams { sigma_ay: say, ..base };
        let c0 = expected_mse_shift(&base, Approach::CausalityAware).unwrap();
        let c1 = expected_mse_shift(&moved, Approach::CausalityAware).unwrap();
        prop_assert_eq!(c0.to_bits(), c1.to_bits());
        let other = ShiftTheoryParams { beta_xa: bxa + 1.0, ..moved };
        prop_assert_eq!(
            expected_mse_shift(&moved, Approach::Residualization).unwrap(),
            expected_mse_shift(&other, Approach::Residualization).unwrap()
        );
        if bxy.abs() > 1e-3 && b.abs() > 1e-3 && say.abs() > 1e-3 {
            let r0 = expected_mse_shift(&base, Approach::Residualization).unwrap();
            let r1 = expected_mse_shift(&moved, Approach::Residualization).unwrap();
            prop_assert!(r0 != r1);
        }
    }
}
