use nalgebra::DVector;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::smoother::smoothed_means_reusing_gains;
use super::{kalman_filter, DlmSpec, FilterResult, ObservationPanel};
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, select_entries};
use crate::rng::{standard_normal_vector, substream};

/// Joint posterior draws of states and disturbances, indexed `[path][step]`.
#[derive(Debug, Clone)]
pub struct SimulatedPaths {
    pub states: Vec<Vec<DVector<f64>>>,
    pub disturbances: Vec<Vec<DVector<f64>>>,
}

impl SimulatedPaths {
    pub fn n_paths(&self) -> usize {
        self.states.len()
    }
}

/// Draws `n_paths` exact samples from `p(x, e | obs)` by mean correction:
/// simulate an unconditional pseudo-path, smooth both the real and the pseudo
/// observations, and add the pseudo-path's deviation from its own smoothed
/// mean to the real smoothed mean. Path `i` uses RNG substream `(seed, i)`.
pub fn simulation_smoother(
    spec: &DlmSpec,
    obs: &ObservationPanel,
    n_paths: usize,
    seed: u64,
) -> Result<SimulatedPaths> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let filter = kalman_filter(spec, obs)?;
    let data: Vec<DVector<f64>> = (0..spec.len())
        .map(|t| select_entries(obs.row(t), &filter.steps[t].observed))
        .collect();
    let (real_states, real_dists) = smoothed_means_reusing_gains(spec, &filter, &data);
    let init_factor = psd_factor(spec.initial_cov())?;

    let draw = |i: usize| {
        draw_path(spec, &filter, &init_factor, &real_states, &real_dists, seed, i as u64)
    };
    #[cfg(feature = "parallel")]
    let paths: Vec<_> = (0..n_paths).into_par_iter().map(draw).collect();
    #[cfg(not(feature = "parallel"))]
    let paths: Vec<_> = (0..n_paths).map(draw).collect();

    let (states, disturbances) = paths.into_iter().unzip();
    Ok(SimulatedPaths { states, disturbances })
}

type PathDraw = (Vec<DVector<f64>>, Vec<DVector<f64>>);

fn draw_path(
    spec: &DlmSpec,
    filter: &FilterResult,
    init_factor: &nalgebra::DMatrix<f64>,
    real_states: &[DVector<f64>],
    real_dists: &[DVector<f64>],
    seed: u64,
    index: u64,
) -> PathDraw {
    let mut rng = substream(seed, index);
    let len = spec.len();
    let mut x = spec.initial_mean() + init_factor * standard_normal_vector(&mut rng, init_factor.ncols());
    let mut xs = Vec::with_capacity(len);
    let mut es = Vec::with_capacity(len);
    let mut ys = Vec::with_capacity(len);
    for t in 0..len {
        let e = standard_normal_vector(&mut rng, spec.n_noise());
        let fs = &filter.steps[t];
        ys.push(&fs.measurement * &x + &fs.measurement_noise * &e);
        let m = spec.step(t);
        let next = &m.transition * &x + &m.state_noise * &e;
        xs.push(x);
        es.push(e);
        x = next;
    }
    let (pseudo_states, pseudo_dists) = smoothed_means_reusing_gains(spec, filter, &ys);
    let states = (0..len).map(|t| &real_states[t] + &xs[t] - &pseudo_states[t]).collect();
    let dists = (0..len).map(|t| &real_dists[t] + &es[t] - &pseudo_dists[t]).collect();
    (states, dists)
}
