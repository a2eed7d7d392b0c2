mod common;

use nalgebra::{dmatrix, DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::forecast_oracle::random_theta;
use common::random::{matrix, rng, spd, vector};
use condgen::estimation::{
    assemble_joint_dlm, disassemble_joint_dlm, estimate_link_niw, estimate_var_sur, sample_link, NiwPosterior,
    ThetaBundle,
};
use condgen::forecast::condition_history;
use condgen::gaussdlm::{kalman_filter, ObservationPanel};
use condgen::linalg::psd_factor;
use condgen::rng::{standard_normal_vector, substream};

struct LinkData {
    x: Vec<DVector<f64>>,
    e: Vec<DVector<f64>>,
    f: Vec<DVector<f64>>,
    coef: DMatrix<f64>,
}

/// `f = f̄ + Γ x̃ + F' e' + noise` with known coefficients.
fn link_data(seed: u64, n_x: usize, n_e1: usize, n_f: usize, t: usize) -> LinkData {
    let mut r = rng(seed);
    let k = 1 + n_x + n_e1;
    let coef = matrix(&mut r, k, n_f, 0.5);
    let resid_cov = spd(&mut r, n_f, 0.01);
    let root = psd_factor(&resid_cov).unwrap();
    let mut data = LinkData { x: vec![], e: vec![], f: vec![], coef: coef.clone() };
    for _ in 0..t {
        let x = vector(&mut r, n_x, 1.0);
        let e = standard_normal_vector(&mut r, n_e1);
        let mut reg = DVector::zeros(k);
        reg[0] = 1.0;
        reg.rows_mut(1, n_x).copy_from(&x);
        reg.rows_mut(1 + n_x, n_e1).copy_from(&e);
        let f = coef.transpose() * reg + &root * standard_normal_vector(&mut r, root.ncols());
        data.x.push(x);
        data.e.push(e);
        data.f.push(f);
    }
    data
}

fn ols(data: &LinkData) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = data.x.len();
    let (n_x, n_e1, n_f) = (data.x[0].len(), data.e[0].len(), data.f[0].len());
    let k = 1 + n_x + n_e1;
    let mut x = DMatrix::zeros(t, k);
    let mut y = DMatrix::zeros(t, n_f);
    for i in 0..t {
        x[(i, 0)] = 1.0;
        x.view_mut((i, 1), (1, n_x)).copy_from(&data.x[i].transpose());
        x.view_mut((i, 1 + n_x), (1, n_e1)).copy_from(&data.e[i].transpose());
        y.row_mut(i).copy_from(&data.f[i].transpose());
    }
    let b = x.clone().svd(true, true).solve(&y, 0.0).unwrap();
    let resid = &y - &x * &b;
    (b, resid.transpose() * resid)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn flat_prior_is_ordinary_least_squares(seed in any::<u64>()) {
        let data = link_data(seed, 2, 1, 3, 60);
        let post = estimate_link_niw(&data.x, &data.e, &data.f, &NiwPosterior::flat(2, 1, 3)).unwrap();
        let (b, scatter) = ols(&data);
        prop_assert!((&post.b - b).abs().max() < 1e-10);
        prop_assert!((&post.v - scatter).abs().max() < 1e-10);
        prop_assert_eq!(post.nu, 60.0 + 3.0 - 2.0 - 1.0);
    }

    #[test]
    fn updating_in_batches_equals_one_update(seed in any::<u64>(), split in 1usize..39) {
        let data = link_data(seed, 1, 2, 2, 40);
        let prior = NiwPosterior::new(DMatrix::identity(4, 4) * 0.5, DMatrix::zeros(4, 2), 5.0, DMatrix::identity(2, 2) * 0.1, 1, 2).unwrap();
        let all = estimate_link_niw(&data.x, &data.e, &data.f, &prior).unwrap();
        let first = estimate_link_niw(&data.x[..split], &data.e[..split], &data.f[..split], &prior).unwrap();
        let both = estimate_link_niw(&data.x[split..], &data.e[split..], &data.f[split..], &first).unwrap();
        prop_assert!((&all.b - &both.b).abs().max() < 1e-9);
        prop_assert!((&all.v - &both.v).abs().max() < 1e-9);
        prop_assert!((&all.lambda - &both.lambda).abs().max() < 1e-9);
        prop_assert_eq!(all.nu, both.nu);
    }
}

#[test]
fn a_dogmatic_prior_dominates_the_data() {
    let data = link_data(2, 2, 1, 2, 100);
    let prior_b = DMatrix::from_element(4, 2, 0.3);
    let prior = NiwPosterior::new(DMatrix::identity(4, 4) * 1e10, prior_b.clone(), 4.0, DMatrix::identity(2, 2), 2, 1).unwrap();
    let post = estimate_link_niw(&data.x, &data.e, &data.f, &prior).unwrap();
    assert!((&post.b - prior_b).abs().max() < 1e-6);
}

#[test]
fn posterior_draws_centre_on_the_posterior() {
    let data = link_data(5, 1, 1, 2, 200);
    let post = estimate_link_niw(&data.x, &data.e, &data.f, &NiwPosterior::flat(1, 1, 2)).unwrap();
    let expected_cov = post.inverse_wishart_mean().unwrap();
    let n = 100_000;
    let mut cov_sum = DMatrix::zeros(2, 2);
    let mut coef_sum = DMatrix::zeros(3, 2);
    for i in 0..n {
        let link = sample_link(&post, i as u64).unwrap();
        cov_sum += &link.f_second * link.f_second.transpose();
        let mut coef = DMatrix::zeros(3, 2);
        coef.row_mut(0).copy_from(&link.f_bar.transpose());
        coef.row_mut(1).copy_from(&link.gamma.transpose());
        coef.row_mut(2).copy_from(&link.f_prime.transpose());
        coef_sum += coef;
    }
    let cov_mean = cov_sum / n as f64;
    assert!((&cov_mean - &expected_cov).norm() / expected_cov.norm() < 0.02);
    let coef_mean = coef_sum / n as f64;
    let lam_inv = post.lambda.clone().try_inverse().unwrap();
    let row_sd = DMatrix::from_fn(3, 2, |i, j| (lam_inv[(i, i)] * expected_cov[(j, j)]).sqrt());
    for i in 0..3 {
        for j in 0..2 {
            assert!((coef_mean[(i, j)] - post.b[(i, j)]).abs() < 5.0 * row_sd[(i, j)] / (n as f64).sqrt());
        }
    }
    let (b, _) = ols(&data);
    assert!((b - &data.coef).abs().max() < 0.1);
}

fn simulate_var(t: usize, seed: u64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, DMatrix<f64>, DMatrix<f64>) {
    let a = dmatrix![0.6, 0.1; -0.2, 0.5];
    let gamma = dmatrix![0.4, -0.3];
    let c = DVector::from_vec(vec![0.5, -0.1]);
    let mut rng = substream(seed, 0);
    let mut y = vec![DVector::from_vec(vec![1.0, 0.0])];
    let mut f = Vec::new();
    for _ in 0..t {
        let prev = y.last().unwrap().clone();
        let shocks = standard_normal_vector(&mut rng, 3);
        f.push(DVector::from_element(1, 0.02) + &gamma * &prev + DVector::from_element(1, 0.1 * shocks[0] + 0.2 * shocks[2]));
        y.push(&a * prev + &c + shocks.rows(0, 2) * 0.5);
    }
    y.pop();
    (y, f, a, gamma)
}

#[test]
fn var_estimates_converge_to_the_truth() {
    let mut errors = Vec::new();
    for t in [1_000, 10_000, 100_000] {
        let (y, f, a, gamma) = simulate_var(t, 21);
        let theta = estimate_var_sur(&y, &f, 1).unwrap();
        let err = (&theta.a - &a).abs().max().max((&theta.gamma - &gamma).abs().max());
        errors.push(err);
    }
    assert!(errors[2] < 0.02, "errors {errors:?}");
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "errors {errors:?}");
}

#[test]
fn var_noise_factor_reproduces_the_residual_covariance() {
    let (y, f, _, _) = simulate_var(50_000, 4);
    let theta = estimate_var_sur(&y, &f, 1).unwrap();
    let macro_cov = &theta.g * theta.g.transpose();
    assert!((macro_cov - DMatrix::identity(2, 2) * 0.25).abs().max() < 0.01);
    let fc = theta.factor_cov();
    assert!((fc[(0, 0)] - 0.05).abs() < 0.003);
    let cross = &theta.f_prime * theta.g.transpose();
    assert!((cross[(0, 0)] - 0.05).abs() < 0.005 && cross[(0, 1)].abs() < 0.005);
}

#[test]
fn joint_dlm_round_trips() {
    let theta = random_theta(&mut rng(9));
    let joint = assemble_joint_dlm(&theta, 5).unwrap();
    let back = disassemble_joint_dlm(&joint).unwrap();
    assert_eq!(back.a, theta.a);
    assert_eq!(back.b, theta.b);
    assert_eq!(back.gamma, theta.gamma);
    assert_eq!(back.g, theta.g);
    assert_eq!(back.h, theta.h);
    assert_eq!(back.f_prime, theta.f_prime);
    assert_eq!(back.f_second, theta.f_second);
    assert_eq!(back.initial_belief().unwrap(), theta.initial_belief().unwrap());
}

#[test]
fn macro_only_history_ignores_the_factor_block() {
    let mut r = rng(10);
    let theta: ThetaBundle = random_theta(&mut r);
    let n_y = theta.dims().n_y;
    let rows: Vec<Vec<Option<f64>>> = (0..12)
        .map(|_| (0..n_y).map(|_| if r.random_bool(0.8) { Some(r.random_range(-1.0..1.0)) } else { None }).collect())
        .collect();
    let y = ObservationPanel::from_options(&rows).unwrap();
    let belief = condition_history(&theta, &y, &ObservationPanel::new()).unwrap();
    let spec = theta.macro_dlm(12).unwrap();
    let direct = kalman_filter(&spec, &y.demeaned(&theta.y_bar).unwrap()).unwrap().terminal();
    assert!((&belief.mean - &direct.mean).abs().max() < 1e-12);
    assert!((&belief.cov - &direct.cov).abs().max() < 1e-12);
}

#[test]
fn factor_history_sharpens_the_terminal_state() {
    let mut r = rng(12);
    let theta = random_theta(&mut r);
    let d = theta.dims();
    let y = ObservationPanel::from_rows((0..10).map(|_| vector(&mut r, d.n_y, 1.0)).collect()).unwrap();
    let f = ObservationPanel::from_rows((0..10).map(|_| vector(&mut r, d.n_f, 0.1)).collect()).unwrap();
    let without = condition_history(&theta, &y, &ObservationPanel::new()).unwrap();
    let with = condition_history(&theta, &y, &f).unwrap();
    assert!(with.cov.trace() <= without.cov.trace() + 1e-12);
    let short = ObservationPanel::from_rows(vec![vector(&mut r, d.n_f, 0.1)]).unwrap();
    assert!(condition_history(&theta, &y, &short).is_err());
}
