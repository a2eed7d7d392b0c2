mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::forecast_oracle::{random_psi, random_terminal, random_theta};
use common::random::{matrix, rng, spd, vector};
use condgen::error::Error;
use condgen::forecast::{conditional_forecast, Scenario, SeriesKind};
use condgen::linalg::block_diag;
use condgen::views::{compile_view, merge_views, NoiseLayout, View, ViewKind};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The compiled block reproduces the native functional:
    /// `sel · native(α, x̃, e) - v = P α + Q x̃ + R e - ṽ`.
    #[test]
    fn compiled_blocks_round_trip_native_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let theta = random_theta(&mut r);
        let psi = random_psi(&mut r, theta.dims().n_f, 2);
        let d = theta.dims();
        let layout = NoiseLayout::of(&theta, &psi);
        let n_a = psi.n_assets();
        let k = r.random_range(0..=2usize);
        let alpha = vector(&mut r, n_a, 0.1);
        let x = vector(&mut r, d.n_x, 1.0);
        let e = vector(&mut r, layout.total(), 1.0);
        let e1 = e.rows(layout.macro_offset(), d.n_e1).into_owned();
        let e2 = e.rows(layout.factor_offset(), d.n_e2).into_owned();
        let mu_f = &theta.f_bar + &theta.gamma * &x;
        for kind in ViewKind::ALL {
            let native = match kind {
                ViewKind::MacroState => &theta.x_bar + &x,
                ViewKind::MacroObservation => &theta.y_bar + &theta.b * &x + &theta.h * &e1,
                ViewKind::MacroShock => e1.clone(),
                ViewKind::MeanFactorReturn => mu_f.clone(),
                ViewKind::FactorReturn => &mu_f + &theta.f_prime * &e1 + &theta.f_second * &e2,
                ViewKind::MeanAssetReturn => &alpha + psi.beta(k).unwrap() * &mu_f,
            };
            if native.is_empty() {
                continue;
            }
            let rows = r.random_range(1..=3);
            let sel = matrix(&mut r, rows, native.len(), 1.0);
            let v = vector(&mut r, rows, 1.0);
            let view = View::new(kind, k as i64, sel.clone(), v.clone(), spd(&mut r, rows, 0.1)).unwrap();
            let block = compile_view(&view, &theta, &psi).unwrap();
            let lhs = &sel * &native - &v;
            let rhs = block.evaluate(&alpha, &x, &e) - &block.value;
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }
    }

    /// Compilation is linear in the selector: stacking selectors stacks blocks.
    #[test]
    fn compile_is_linear_in_the_selector(seed in any::<u64>()) {
        let mut r = rng(seed);
        let theta = random_theta(&mut r);
        let psi = random_psi(&mut r, theta.dims().n_f, 1);
        let kind = ViewKind::ALL[r.random_range(0..5)];
        let n = kind.native_dim(&theta, &psi);
        let (s1, s2) = (matrix(&mut r, 1, n, 1.0), matrix(&mut r, 1, n, 1.0));
        let (v1, v2) = (vector(&mut r, 1, 1.0), vector(&mut r, 1, 1.0));
        let c = r.random_range(-2.0..2.0);
        let one = |s: &DMatrix<f64>, v: &DVector<f64>| {
            compile_view(&View::new(kind, 1, s.clone(), v.clone(), DMatrix::zeros(1, 1)).unwrap(), &theta, &psi).unwrap()
        };
        let b1 = one(&s1, &v1);
        let b2 = one(&s2, &v2);
        let combo = one(&(&s1 + &s2 * c), &(&v1 + &v2 * c));
        prop_assert!((&combo.q - (&b1.q + &b2.q * c)).abs().max() < 1e-12);
        prop_assert!((&combo.r - (&b1.r + &b2.r * c)).abs().max() < 1e-12);
        prop_assert!((&combo.p - (&b1.p + &b2.p * c)).abs().max() < 1e-12);
        prop_assert!((&combo.value - (&b1.value + &b2.value * c)).abs().max() < 1e-12);
    }

    /// Several views at one step give the same forecast as one stacked view.
    #[test]
    fn separate_views_equal_one_stacked_view(seed in any::<u64>()) {
        let mut r = rng(seed);
        let theta = random_theta(&mut r);
        let psi = random_psi(&mut r, theta.dims().n_f, 2);
        let terminal = random_terminal(&mut r, theta.dims().n_x);
        let kind = ViewKind::FactorReturn;
        let n = kind.native_dim(&theta, &psi);
        let (s1, s2) = (matrix(&mut r, 1, n, 1.0), matrix(&mut r, 2, n, 1.0));
        let (o1, o2) = (spd(&mut r, 1, 0.1), spd(&mut r, 2, 0.1));
        let (v1, v2) = (vector(&mut r, 1, 0.2), vector(&mut r, 2, 0.2));
        let separate = vec![
            View::new(kind, 2, s1.clone(), v1.clone(), o1.clone()).unwrap(),
            View::new(kind, 2, s2.clone(), v2.clone(), o2.clone()).unwrap(),
        ];
        let stacked = vec![View::new(
            kind,
            2,
            condgen::linalg::vstack(&[&s1, &s2]).unwrap(),
            condgen::linalg::vstack_vec(&[&v1, &v2]),
            block_diag(&[&o1, &o2]),
        )
        .unwrap()];
        let a = conditional_forecast(&theta, &terminal, &Scenario::new(psi.clone(), separate, 2)).unwrap();
        let b = conditional_forecast(&theta, &terminal, &Scenario::new(psi, stacked, 2)).unwrap();
        for kind in SeriesKind::ALL {
            for k in 0..=2 {
                prop_assert!((&a.core(kind).mean[k] - &b.core(kind).mean[k]).abs().max() < 1e-10);
                prop_assert!((&a.core(kind).cov[k] - &b.core(kind).cov[k]).abs().max() < 1e-10);
            }
        }
    }
}

#[test]
fn duplicated_exact_views_change_nothing() {
    let mut r = rng(3);
    let theta = random_theta(&mut r);
    let psi = random_psi(&mut r, theta.dims().n_f, 3);
    let terminal = random_terminal(&mut r, theta.dims().n_x);
    let view = View::exact(ViewKind::MacroState, 2, theta.dims().n_x, 0, 0.7).unwrap();
    let once = conditional_forecast(&theta, &terminal, &Scenario::new(psi.clone(), vec![view.clone()], 3)).unwrap();
    let twice = conditional_forecast(&theta, &terminal, &Scenario::new(psi, vec![view.clone(), view], 3)).unwrap();
    for kind in SeriesKind::ALL {
        for k in 0..=3 {
            assert!((&once.core(kind).mean[k] - &twice.core(kind).mean[k]).abs().max() < 1e-9);
            assert!((&once.core(kind).cov[k] - &twice.core(kind).cov[k]).abs().max() < 1e-9);
        }
    }
}

#[test]
fn views_outside_the_forecast_window_are_rejected() {
    let mut r = rng(4);
    let theta = random_theta(&mut r);
    let psi = random_psi(&mut r, theta.dims().n_f, 3);
    let past = View::exact(ViewKind::MacroState, -1, theta.dims().n_x, 0, 0.0).unwrap();
    assert!(matches!(compile_view(&past, &theta, &psi), Err(Error::HistoricalTime { time: -1 })));
    let late = View::exact(ViewKind::MacroState, 4, theta.dims().n_x, 0, 0.0).unwrap();
    assert!(matches!(compile_view(&late, &theta, &psi), Err(Error::TimeOutOfHorizon { time: 4, horizon: 3 })));
}

#[test]
fn merging_requires_a_common_step() {
    let mut r = rng(5);
    let theta = random_theta(&mut r);
    let psi = random_psi(&mut r, theta.dims().n_f, 3);
    let a = compile_view(&View::exact(ViewKind::MacroShock, 1, theta.dims().n_e1, 0, 0.0).unwrap(), &theta, &psi).unwrap();
    let b = compile_view(&View::exact(ViewKind::MacroShock, 2, theta.dims().n_e1, 0, 0.0).unwrap(), &theta, &psi).unwrap();
    assert!(matches!(merge_views(&[a, b]), Err(Error::TimeMismatch(1, 2))));
}
