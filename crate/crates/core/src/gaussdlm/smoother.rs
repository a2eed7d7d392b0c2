use nalgebra::{DMatrix, DVector};

use super::{DlmSpec, FilterResult, GaussianBelief};
use crate::error::{dims, Result};
use crate::linalg::{hstack, symmetrize, vstack};

/// Moments of the state and disturbance at one step given all observations.
#[derive(Debug, Clone)]
pub struct SmoothStep {
    pub state: GaussianBelief,
    pub disturbance_mean: DVector<f64>,
    pub disturbance_cov: DMatrix<f64>,
    /// `Cov(x[t], e[t] | all)`, n_x × n_e.
    pub state_disturbance_cov: DMatrix<f64>,
    /// `Cov(x[t+1], x[t] | all)`; `None` at the final step.
    pub lag_one_cov: Option<DMatrix<f64>>,
}

impl SmoothStep {
    /// Mean and covariance of the stacked vector `(x[t], e[t])`.
    pub fn joint(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.state.mean.len();
        let ne = self.disturbance_mean.len();
        let mut mean = DVector::zeros(n + ne);
        mean.rows_mut(0, n).copy_from(&self.state.mean);
        mean.rows_mut(n, ne).copy_from(&self.disturbance_mean);
        let top = hstack(&[&self.state.cov, &self.state_disturbance_cov]).expect("row counts agree");
        let bottom = hstack(&[&self.state_disturbance_cov.transpose(), &self.disturbance_cov])
            .expect("row counts agree");
        let cov = vstack(&[&top, &bottom]).expect("column counts agree");
        (mean, cov)
    }
}

#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub steps: Vec<SmoothStep>,
    pub log_likelihood: f64,
}

/// Backward pass producing smoothed states and disturbances.
///
/// With `L = A - K C` and `J = G - K H`, the recursion runs backwards from
/// `r = 0`, `N = 0`:
///
/// ```text
/// u       = S⁺ e - Kᵀ r
/// e[t|n]  = Gᵀ r + Hᵀ u,            Var = I - Hᵀ S⁺ H - Jᵀ N J
/// r      <- Cᵀ S⁺ e + Lᵀ r,         N  <- Cᵀ S⁺ C + Lᵀ N L
/// x[t|n]  = m + P r,                Var = P - P N P
/// ```
///
/// where `m, P` are the one-step predictions.
pub fn kalman_smoother(spec: &DlmSpec, filter: &FilterResult) -> Result<SmoothResult> {
    if filter.len() != spec.len() {
        return Err(dims("filter result and model have different lengths"));
    }
    let n = spec.n_state();
    let ne = spec.n_noise();
    let len = spec.len();
    let mut r = DVector::<f64>::zeros(n);
    let mut big_n = DMatrix::<f64>::zeros(n, n);
    let mut out: Vec<SmoothStep> = Vec::with_capacity(len);

    for t in (0..len).rev() {
        let fs = &filter.steps[t];
        let m = spec.step(t);
        let c = &fs.measurement;
        let h = &fs.measurement_noise;
        let k = &fs.gain;
        let s_inv = &fs.innovation_pinv;
        let p = &fs.predicted.cov;

        let l = &m.transition - k * c;
        let j = &m.state_noise - k * h;

        let u = s_inv * &fs.innovation - k.transpose() * &r;
        let dist_mean = m.state_noise.transpose() * &r + h.transpose() * &u;
        let mut dist_cov = DMatrix::identity(ne, ne)
            - h.transpose() * s_inv * h
            - j.transpose() * &big_n * &j;
        symmetrize(&mut dist_cov);
        let cross = -(p * (c.transpose() * s_inv * h + l.transpose() * &big_n * &j));

        let lag_one = if t + 1 < len {
            let p_next = &filter.steps[t + 1].predicted.cov;
            let cov_t_next = p * l.transpose() * (DMatrix::identity(n, n) - &big_n * p_next);
            Some(cov_t_next.transpose())
        } else {
            None
        };

        let ct_sinv = c.transpose() * s_inv;
        r = &ct_sinv * &fs.innovation + l.transpose() * &r;
        big_n = &ct_sinv * c + l.transpose() * &big_n * &l;
        symmetrize(&mut big_n);

        let mean = &fs.predicted.mean + p * &r;
        let mut cov = p - p * &big_n * p;
        symmetrize(&mut cov);

        out.push(SmoothStep {
            state: GaussianBelief::new(mean, cov, t, Some(len - 1)),
            disturbance_mean: dist_mean,
            disturbance_cov: dist_cov,
            state_disturbance_cov: cross,
            lag_one_cov: lag_one,
        });
    }
    out.reverse();
    Ok(SmoothResult { steps: out, log_likelihood: filter.log_likelihood })
}

/// Smoothed state and disturbance means for a new data set on the same
/// observation pattern, reusing the gains of an existing filter pass.
/// `data[t]` holds only the observed rows listed in `filter.steps[t].observed`.
pub(crate) fn smoothed_means_reusing_gains(
    spec: &DlmSpec,
    filter: &FilterResult,
    data: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let len = spec.len();
    let mut predicted = Vec::with_capacity(len);
    let mut innovations = Vec::with_capacity(len);
    let mut mean = spec.initial_mean().clone();
    for t in 0..len {
        let fs = &filter.steps[t];
        let e = &data[t] - &fs.measurement * &mean;
        let next = &spec.step(t).transition * &mean + &fs.gain * &e;
        predicted.push(mean);
        innovations.push(e);
        mean = next;
    }
    let n = spec.n_state();
    let mut r = DVector::<f64>::zeros(n);
    let mut states = vec![DVector::zeros(0); len];
    let mut dists = vec![DVector::zeros(0); len];
    for t in (0..len).rev() {
        let fs = &filter.steps[t];
        let m = spec.step(t);
        let s_e = &fs.innovation_pinv * &innovations[t];
        let u = &s_e - fs.gain.transpose() * &r;
        dists[t] = m.state_noise.transpose() * &r + fs.measurement_noise.transpose() * &u;
        let l = &m.transition - &fs.gain * &fs.measurement;
        r = fs.measurement.transpose() * &s_e + l.transpose() * &r;
        states[t] = &predicted[t] + &fs.predicted.cov * &r;
    }
    (states, dists)
}
