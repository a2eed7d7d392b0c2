mod common;

use nalgebra::{dmatrix, dvector, DMatrix};
use proptest::prelude::*;

use common::bl::random_bl;
use common::random::rng;
use condgen::blref::{bl_equivalence_check, bl_posterior, bl_posterior_gain, bl_posterior_information, BlInputs};
use condgen::linalg::{max_abs, max_abs_vec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn csg_single_period_reproduces_black_litterman(seed in any::<u64>()) {
        let inputs = random_bl(&mut rng(seed));
        let report = bl_equivalence_check(&inputs).unwrap();
        prop_assert!(report.max_discrepancy() <= 1e-8, "discrepancy {}", report.max_discrepancy());
    }

    #[test]
    fn information_and_gain_forms_agree(seed in any::<u64>()) {
        let mut inputs = random_bl(&mut rng(seed));
        inputs.omega = &inputs.omega + DMatrix::identity(inputs.v.len(), inputs.v.len()) * 1e-4;
        let (m1, c1) = bl_posterior_information(&inputs).unwrap();
        let (m2, c2) = bl_posterior_gain(&inputs).unwrap();
        prop_assert!(max_abs_vec(&(m1 - m2)) < 1e-10);
        prop_assert!(max_abs(&(c1 - c2)) < 1e-10);
    }

    #[test]
    fn posterior_mean_is_affine_in_the_views(seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let base = random_bl(&mut r);
        let v2 = common::random::vector(&mut r, base.v.len(), 0.1);
        let at = |v: nalgebra::DVector<f64>| {
            let mut i = base.clone();
            i.v = v;
            i.omega = &i.omega + DMatrix::identity(i.v.len(), i.v.len()) * 1e-4;
            bl_posterior(&i).unwrap().0
        };
        let m0 = at(base.v.clone());
        let m1 = at(v2.clone());
        let mix = at(&base.v * (1.0 - a) + &v2 * a);
        prop_assert!(max_abs_vec(&(mix - (m0 * (1.0 - a) + m1 * a))) < 1e-10);
    }
}

fn simple() -> BlInputs {
    BlInputs {
        r_f: 0.01,
        sigma: dmatrix![0.04, 0.006; 0.006, 0.09],
        w: dvector![0.6, 0.4],
        lambda: 3.0,
        tau: 0.0,
        p: dmatrix![1.0, 0.0],
        v: dvector![0.2],
        omega: dmatrix![0.01],
    }
}

#[test]
fn dogmatic_prior_ignores_noisy_views() {
    let i = simple();
    let report = bl_equivalence_check(&i).unwrap();
    let pi = i.prior_mean();
    assert!(max_abs_vec(&(&report.bl_mean - &pi)) < 1e-14);
    assert!(max_abs_vec(&(&report.csg_mean - &pi)) < 1e-12);
    assert!(max_abs(&report.bl_cov) < 1e-14 && max_abs(&report.csg_cov) < 1e-12);
}

#[test]
fn single_exact_view_on_a_single_asset() {
    let i = BlInputs {
        r_f: 0.02,
        sigma: dmatrix![0.05],
        w: dvector![1.0],
        lambda: 2.0,
        tau: 0.1,
        p: dmatrix![1.0],
        v: dvector![0.07],
        omega: dmatrix![0.0],
    };
    let report = bl_equivalence_check(&i).unwrap();
    assert!((report.bl_mean[0] - 0.07).abs() < 1e-12);
    assert!((report.csg_mean[0] - 0.07).abs() < 1e-12);
}

#[test]
fn frozen_two_asset_posterior() {
    let mut i = simple();
    i.tau = 0.05;
    let (m, c) = bl_posterior(&i).unwrap();
    // pi = (0.0892, 0.1288); var(mu_1) = 0.002, precision-weighted with 0.01
    let pi = i.prior_mean();
    assert!((pi[0] - 0.0892).abs() < 1e-15 && (pi[1] - 0.1288).abs() < 1e-15);
    let gain = 0.002 / 0.012;
    assert!((m[0] - (0.0892 + gain * (0.2 - 0.0892))).abs() < 1e-14);
    assert!((c[(0, 0)] - (0.002 - gain * 0.002)).abs() < 1e-15);
    // the second asset moves through its covariance with the first
    assert!((m[1] - (0.1288 + 0.0003 / 0.012 * (0.2 - 0.0892))).abs() < 1e-14);
}
