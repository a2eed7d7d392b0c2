//! Conditional forecasting and simulation.
//!
//! A forecast runs in two stages. The history stage filters the joint
//! macro/factor DLM on past data and returns the belief about `x̃[T]`. The
//! future stage builds a DLM over horizon steps `0..=H` whose only
//! observations are the compiled views, smooths it, and maps the smoothed
//! states and disturbances to every reported series.

mod future;
mod panel;

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub use future::{build_future_dlm, FutureDlm, FutureLayout};
pub use panel::{
    derive_series, ForecastPanel, LevelOffsets, LinearFunctional, SeriesForecast, SeriesId, SeriesKind,
    StatePosterior,
};

use crate::error::{dims, Error, Result};
use crate::estimation::{assemble_joint_dlm, ThetaBundle};
use crate::gaussdlm::{kalman_filter, kalman_smoother, simulation_smoother, GaussianBelief, ObservationPanel};
use crate::linalg::{symmetrized, vstack_vec};
use crate::markets::MarketSpec;
use crate::rng::derive_seed;
use crate::views::{compile_view, View, ViewBlock};

/// Everything about a forecast that does not depend on the parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub psi: MarketSpec,
    pub views: Vec<View>,
    pub horizon: usize,
    pub functionals: Vec<LinearFunctional>,
}

impl Scenario {
    pub fn new(psi: MarketSpec, views: Vec<View>, horizon: usize) -> Self {
        Self { psi, views, horizon, functionals: Vec::new() }
    }

    pub fn with_functionals(mut self, functionals: Vec<LinearFunctional>) -> Self {
        self.functionals = functionals;
        self
    }

    pub fn compile(&self, theta: &ThetaBundle) -> Result<Vec<ViewBlock>> {
        self.views
            .iter()
            .map(|v| {
                if v.time > self.horizon as i64 {
                    return Err(Error::TimeOutOfHorizon { time: v.time, horizon: self.horizon });
                }
                compile_view(v, theta, &self.psi)
            })
            .collect()
    }

    pub fn future_dlm(&self, theta: &ThetaBundle, terminal: &GaussianBelief) -> Result<FutureDlm> {
        build_future_dlm(theta, &self.psi, &self.compile(theta)?, terminal, self.horizon)
    }
}

/// Filters the joint macro/factor DLM on history and returns the belief about
/// `x̃` at the last period. `y` and `f` hold levels and may contain missing
/// entries; either may be empty. With no history at all the model's initial
/// belief is returned.
pub fn condition_history(theta: &ThetaBundle, y: &ObservationPanel, f: &ObservationPanel) -> Result<GaussianBelief> {
    let d = theta.dims();
    if !y.is_empty() && !f.is_empty() && y.len() != f.len() {
        return Err(dims(format!("macro history has {} periods, factor history {}", y.len(), f.len())));
    }
    let len = y.len().max(f.len());
    if len == 0 {
        return theta.initial_belief();
    }
    let y = if y.is_empty() { y.clone() } else { y.demeaned(&theta.y_bar)? };
    let f = if f.is_empty() { f.clone() } else { f.demeaned(&theta.f_bar)? };
    let data = ObservationPanel::hconcat(&y, d.n_y, &f, d.n_f)?;
    let joint = assemble_joint_dlm(theta, len)?;
    Ok(kalman_filter(&joint.spec, &data)?.terminal())
}

/// Closed-form conditional moments of every series for one parameter set.
pub fn conditional_forecast(theta: &ThetaBundle, terminal: &GaussianBelief, scenario: &Scenario) -> Result<ForecastPanel> {
    let fut = scenario.future_dlm(theta, terminal)?;
    let filter = kalman_filter(&fut.spec, &fut.observations)?;
    let smooth = kalman_smoother(&fut.spec, &filter)?;
    let moments = smooth.steps.iter().map(|s| s.joint()).collect();
    derive_series(&StatePosterior::Moments(moments), theta, &scenario.psi, &fut.layout, &scenario.functionals, 0)
}

/// `n_paths` exact draws from the conditional distribution for one parameter
/// set.
pub fn conditional_simulate(
    theta: &ThetaBundle,
    terminal: &GaussianBelief,
    scenario: &Scenario,
    n_paths: usize,
    seed: u64,
) -> Result<ForecastPanel> {
    let fut = scenario.future_dlm(theta, terminal)?;
    let sim = simulation_smoother(&fut.spec, &fut.observations, n_paths, derive_seed(seed, 0))?;
    let paths = sim
        .states
        .iter()
        .zip(&sim.disturbances)
        .map(|(xs, es)| xs.iter().zip(es).map(|(x, e)| vstack_vec(&[x, e])).collect())
        .collect();
    derive_series(&StatePosterior::Paths(paths), theta, &scenario.psi, &fut.layout, &scenario.functionals, seed)
}

fn map_samples<T: Send, F>(samples: &[(ThetaBundle, GaussianBelief)], f: F) -> Result<Vec<T>>
where
    F: Fn(usize, &ThetaBundle, &GaussianBelief) -> Result<T> + Sync + Send,
{
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    #[cfg(feature = "parallel")]
    let out = samples.par_iter().enumerate().map(|(i, (t, b))| f(i, t, b)).collect();
    #[cfg(not(feature = "parallel"))]
    let out = samples.iter().enumerate().map(|(i, (t, b))| f(i, t, b)).collect();
    out
}

/// Equal-weight mixture over parameter draws, each paired with its terminal
/// belief. Means average; covariances are the average within-draw covariance
/// plus the covariance of the per-draw means.
pub fn mixture_forecast(samples: &[(ThetaBundle, GaussianBelief)], scenario: &Scenario) -> Result<ForecastPanel> {
    let panels = map_samples(samples, |_, theta, terminal| conditional_forecast(theta, terminal, scenario))?;
    let n = panels.len() as f64;
    let mut out = panels[0].clone();
    out.joint = None;
    for (s, series) in out.series.iter_mut().enumerate() {
        for k in 0..series.mean.len() {
            let mean = panels.iter().fold(DVector::zeros(series.mean[k].len()), |acc, p| acc + &p.series[s].mean[k]) / n;
            let mut cov = DMatrix::zeros(mean.len(), mean.len());
            for p in &panels {
                let dev = &p.series[s].mean[k] - &mean;
                cov += &p.series[s].cov[k] + &dev * dev.transpose();
            }
            series.mean[k] = mean;
            series.cov[k] = symmetrized(cov / n);
        }
    }
    Ok(out)
}

/// Pools `n_paths` conditional draws from every parameter set. Draw set `i`
/// uses a seed derived from `(seed, i)`.
pub fn mixture_simulate(
    samples: &[(ThetaBundle, GaussianBelief)],
    scenario: &Scenario,
    n_paths: usize,
    seed: u64,
) -> Result<ForecastPanel> {
    let panels = map_samples(samples, |i, theta, terminal| {
        conditional_simulate(theta, terminal, scenario, n_paths, derive_seed(seed, i as u64 + 1))
    })?;
    let mut pooled: Vec<Vec<Vec<DVector<f64>>>> = vec![Vec::new(); panels[0].series.len()];
    for p in &panels {
        for (s, series) in p.series.iter().enumerate() {
            pooled[s].extend(series.paths.iter().flatten().cloned());
        }
    }
    let mut out = panels[0].clone();
    out.n_paths = Some(n_paths * panels.len());
    for (series, paths) in out.series.iter_mut().zip(pooled) {
        *series = panel::from_paths(series.id.clone(), paths, series.exponentiate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markets::AlphaPersistence;
    use crate::views::ViewKind;
    use nalgebra::dmatrix;

    fn ar1() -> ThetaBundle {
        ThetaBundle::new(
            dmatrix![0.9],
            dmatrix![1.0],
            dmatrix![0.5],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![0.0],
            dmatrix![0.2],
            DVector::from_element(1, 2.0),
            DVector::from_element(1, 2.0),
            DVector::from_element(1, 0.01),
        )
        .unwrap()
    }

    fn psi(horizon: usize) -> MarketSpec {
        MarketSpec::homogeneous(dmatrix![1.0; 0.5], dmatrix![0.04, 0.0; 0.0, 0.09], 0.1, AlphaPersistence::ConstantAlpha, horizon)
            .unwrap()
    }

    fn terminal() -> GaussianBelief {
        GaussianBelief::new(DVector::from_element(1, 0.3), dmatrix![0.05], 0, None)
    }

    #[test]
    fn unconditional_state_follows_transition() {
        let sc = Scenario::new(psi(4), vec![], 4);
        let p = conditional_forecast(&ar1(), &terminal(), &sc).unwrap();
        let x = p.core(SeriesKind::X);
        for k in 0..=4 {
            assert!((x.mean[k][0] - (2.0 + 0.3 * 0.9f64.powi(k as i32))).abs() < 1e-12);
        }
        let mut v = 0.05;
        for k in 0..=4 {
            assert!((x.cov[k][(0, 0)] - v).abs() < 1e-12);
            v = 0.81 * v + 1.0;
        }
    }

    #[test]
    fn exact_view_pins_the_state() {
        let view = View::exact(ViewKind::MacroState, 3, 1, 0, 5.0).unwrap();
        let sc = Scenario::new(psi(4), vec![view], 4);
        let p = conditional_forecast(&ar1(), &terminal(), &sc).unwrap();
        let x = p.core(SeriesKind::X);
        assert!((x.mean[3][0] - 5.0).abs() < 1e-10);
        assert!(x.cov[3][(0, 0)].abs() < 1e-10);
        assert!(x.mean[2][0] > 2.0 + 0.3 * 0.81);
    }

    #[test]
    fn views_beyond_the_scenario_horizon_are_rejected() {
        let view = View::exact(ViewKind::MacroState, 3, 1, 0, 5.0).unwrap();
        let sc = Scenario::new(psi(4), vec![view], 2);
        assert!(matches!(
            conditional_forecast(&ar1(), &terminal(), &sc),
            Err(Error::TimeOutOfHorizon { time: 3, horizon: 2 })
        ));
    }

    #[test]
    fn empty_history_gives_initial_belief() {
        let theta = ar1();
        let b = condition_history(&theta, &ObservationPanel::new(), &ObservationPanel::new()).unwrap();
        assert_eq!(b, theta.initial_belief().unwrap());
    }

    #[test]
    fn single_draw_mixture_is_the_draw() {
        let sc = Scenario::new(psi(2), vec![View::with_stdev(ViewKind::FactorReturn, 1, 1, 0, 0.2, 0.1).unwrap()], 2);
        let one = conditional_forecast(&ar1(), &terminal(), &sc).unwrap();
        let mix = mixture_forecast(&[(ar1(), terminal())], &sc).unwrap();
        for (a, b) in one.series.iter().zip(&mix.series) {
            for k in 0..=2 {
                assert!((&a.mean[k] - &b.mean[k]).abs().max() < 1e-14);
                assert!((&a.cov[k] - &b.cov[k]).abs().max() < 1e-14);
            }
        }
        assert!(matches!(mixture_forecast(&[], &sc), Err(Error::EmptySample)));
    }
}
