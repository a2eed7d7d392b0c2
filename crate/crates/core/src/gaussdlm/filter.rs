use nalgebra::{DMatrix, DVector};

use super::{DlmSpec, GaussianBelief, ObservationPanel};
use crate::error::{dims, Error, Result};
use crate::linalg::{select_entries, select_rows, sym_pinv_scaled, symmetrize};

#[derive(Debug, Clone, Copy)]
pub struct FilterOptions {
    /// Fall back to a pseudo-inverse when the innovation covariance is rank
    /// deficient. When false, rank deficiency is a `SingularInnovation` error.
    pub allow_pseudo_inverse: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { allow_pseudo_inverse: true }
    }
}

/// Everything the filter computes at one step. The reduced matrices and gains
/// are kept so the smoother and simulation smoother can reuse them.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub predicted: GaussianBelief,
    pub filtered: GaussianBelief,
    /// Indices of the observation rows used at this step.
    pub observed: Vec<usize>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub(crate) innovation_pinv: DMatrix<f64>,
    /// Prediction gain `(A P Cᵀ + G Hᵀ) S⁺`.
    pub(crate) gain: DMatrix<f64>,
    pub(crate) measurement: DMatrix<f64>,
    pub(crate) measurement_noise: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    pub steps: Vec<FilterStep>,
    pub log_likelihood: f64,
    /// One-step prediction for the step after the last observation.
    pub next: GaussianBelief,
}

impl FilterResult {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Filtered belief at the final step, or the initial belief when the
    /// model has no steps.
    pub fn terminal(&self) -> GaussianBelief {
        match self.steps.last() {
            Some(s) => s.filtered.clone(),
            None => self.next.clone(),
        }
    }
}

fn max_diagonal(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().fold(0.0_f64, |acc, &v| acc.max(v))
}

pub fn kalman_filter(spec: &DlmSpec, obs: &ObservationPanel) -> Result<FilterResult> {
    kalman_filter_with(spec, obs, FilterOptions::default())
}

/// Forward pass with correlated state/measurement noise.
///
/// At each step, with prediction `(m, P)` and the observed rows of `C`, `H`:
///
/// ```text
/// e = y - C m,   S = C P Cᵀ + H Hᵀ
/// filtered:   m + K₀ e,   (I - K₀ C) P (I - K₀ C)ᵀ + K₀ H Hᵀ K₀ᵀ,   K₀ = P Cᵀ S⁺
/// predicted:  A m + K e,  (A - K C) P (A - K C)ᵀ + (G - K H)(G - K H)ᵀ,   K = (A P Cᵀ + G Hᵀ) S⁺
/// ```
///
/// The covariance updates are written as sums of outer products so they stay
/// PSD and do not cancel when the state is nearly determined.
pub fn kalman_filter_with(spec: &DlmSpec, obs: &ObservationPanel, opts: FilterOptions) -> Result<FilterResult> {
    if obs.len() != spec.len() {
        return Err(dims(format!(
            "panel has {} steps, model has {}",
            obs.len(),
            spec.len()
        )));
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut mean = spec.initial_mean().clone();
    let mut cov = spec.initial_cov().clone();
    let mut steps = Vec::with_capacity(spec.len());
    let mut log_likelihood = 0.0;
    let mut peak_var = max_diagonal(&cov);

    for t in 0..spec.len() {
        let m = spec.step(t);
        if obs.width(t) != m.n_obs() {
            return Err(dims(format!(
                "step {t}: observation width {} but model has {} rows",
                obs.width(t),
                m.n_obs()
            )));
        }
        let idx = obs.observed_indices(t);
        let c = select_rows(&m.measurement, &idx);
        let h = select_rows(&m.measurement_noise, &idx);
        let y = select_entries(obs.row(t), &idx);

        let innovation = &y - &c * &mean;
        let pct = &cov * c.transpose();
        let mut s = &c * &pct + &h * h.transpose();
        symmetrize(&mut s);
        peak_var = peak_var.max(max_diagonal(&cov));
        let scale = c.norm_squared() * peak_var + h.norm_squared();
        let pinv = sym_pinv_scaled(&s, scale);
        if pinv.rank < idx.len() && !opts.allow_pseudo_inverse {
            return Err(Error::SingularInnovation { step: t });
        }
        let s_inv = pinv.inverse;
        if !idx.is_empty() {
            let quad = (innovation.transpose() * &s_inv * &innovation)[(0, 0)];
            log_likelihood -= 0.5 * (pinv.rank as f64 * ln_2pi + pinv.log_pdet + quad);
        }

        let filt_gain = &pct * &s_inv;
        let filt_mean = &mean + &filt_gain * &innovation;
        let n = mean.len();
        let keep = DMatrix::identity(n, n) - &filt_gain * &c;
        let filt_noise = &filt_gain * &h;
        let mut filt_cov = &keep * &cov * keep.transpose() + &filt_noise * filt_noise.transpose();
        symmetrize(&mut filt_cov);

        let gain = (&m.transition * &pct + &m.state_noise * h.transpose()) * &s_inv;
        let next_mean = &m.transition * &mean + &gain * &innovation;
        let carry = &m.transition - &gain * &c;
        let next_noise = &m.state_noise - &gain * &h;
        let mut next_cov = &carry * &cov * carry.transpose() + &next_noise * next_noise.transpose();
        symmetrize(&mut next_cov);

        let given = if t == 0 { None } else { Some(t - 1) };
        steps.push(FilterStep {
            predicted: GaussianBelief::new(mean, cov, t, given),
            filtered: GaussianBelief::new(filt_mean, filt_cov, t, Some(t)),
            observed: idx,
            innovation,
            innovation_cov: s,
            innovation_pinv: s_inv,
            gain,
            measurement: c,
            measurement_noise: h,
        });
        mean = next_mean;
        cov = next_cov;
    }

    let last = spec.len().checked_sub(1);
    Ok(FilterResult {
        steps,
        log_likelihood,
        next: GaussianBelief::new(mean, cov, spec.len(), last),
    })
}
