//! Gaussian dynamic linear models.
//!
//! The model is
//!
//! ```text
//! x[t+1] = A[t] x[t] + G[t] e[t]
//!   y[t] = C[t] x[t] + H[t] e[t]        e[t] ~ N(0, I) i.i.d.
//!   x[1] ~ N(m, P)
//! ```
//!
//! State and measurement share one disturbance vector, so their noises are
//! correlated through `G Hᵀ`. Observation rows may be missing at any time;
//! missing rows are deleted from `y`, `C` and `H` before the update.

mod filter;
mod lyapunov;
mod simsmooth;
mod smoother;

pub use filter::{kalman_filter, kalman_filter_with, FilterOptions, FilterResult, FilterStep};
pub use lyapunov::{solve_discrete_lyapunov, stationary_init};
pub use simsmooth::{simulation_smoother, SimulatedPaths};
pub use smoother::{kalman_smoother, SmoothResult, SmoothStep};

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::linalg::{ensure_len, ensure_shape, ensure_square, is_finite, symmetrized, max_asymmetry, min_eigenvalue, PSD_NEG_TOL};

/// Matrices governing one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrices {
    /// `A[t]`, n_x × n_x.
    pub transition: DMatrix<f64>,
    /// `C[t]`, n_m(t) × n_x.
    pub measurement: DMatrix<f64>,
    /// `G[t]`, n_x × n_e.
    pub state_noise: DMatrix<f64>,
    /// `H[t]`, n_m(t) × n_e.
    pub measurement_noise: DMatrix<f64>,
}

impl StepMatrices {
    pub fn n_obs(&self) -> usize {
        self.measurement.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Steps {
    Shared(StepMatrices),
    PerTime(Vec<StepMatrices>),
}

/// A time-inhomogeneous Gaussian DLM over a fixed number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmSpec {
    steps: Steps,
    len: usize,
    n_state: usize,
    n_noise: usize,
    initial_mean: DVector<f64>,
    initial_cov: DMatrix<f64>,
}

impl DlmSpec {
    /// Same matrices at every one of `len` steps.
    pub fn homogeneous(
        step: StepMatrices,
        len: usize,
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let (n_state, n_noise) = check_step(&step, None, 0)?;
        let initial_cov = check_initial(&initial_mean, initial_cov, n_state)?;
        Ok(Self { steps: Steps::Shared(step), len, n_state, n_noise, initial_mean, initial_cov })
    }

    /// One set of matrices per step; the observation count may vary by step.
    pub fn time_varying(
        steps: Vec<StepMatrices>,
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::InvalidArgument("time-varying DLM needs at least one step".into()))?;
        let (n_state, n_noise) = (first.transition.nrows(), first.state_noise.ncols());
        for (t, s) in steps.iter().enumerate() {
            check_step(s, Some((n_state, n_noise)), t)?;
        }
        let initial_cov = check_initial(&initial_mean, initial_cov, n_state)?;
        let len = steps.len();
        Ok(Self { steps: Steps::PerTime(steps), len, n_state, n_noise, initial_mean, initial_cov })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    pub fn n_obs(&self, t: usize) -> usize {
        self.step(t).n_obs()
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.steps, Steps::Shared(_))
    }

    /// Matrices at step `t` (0-based). Panics when `t >= len()`.
    pub fn step(&self, t: usize) -> &StepMatrices {
        assert!(t < self.len, "step {t} out of range for DLM of length {}", self.len);
        match &self.steps {
            Steps::Shared(s) => s,
            Steps::PerTime(v) => &v[t],
        }
    }

    pub fn initial_mean(&self) -> &DVector<f64> {
        &self.initial_mean
    }

    pub fn initial_cov(&self) -> &DMatrix<f64> {
        &self.initial_cov
    }

    pub fn with_len(&self, len: usize) -> Result<Self> {
        match &self.steps {
            Steps::Shared(_) => {
                let mut out = self.clone();
                out.len = len;
                Ok(out)
            }
            Steps::PerTime(_) => Err(Error::InvalidArgument(
                "only homogeneous DLMs can be re-lengthened".into(),
            )),
        }
    }
}

fn check_step(s: &StepMatrices, expect: Option<(usize, usize)>, t: usize) -> Result<(usize, usize)> {
    let n = ensure_square(&s.transition, "transition")?;
    let ne = s.state_noise.ncols();
    if let Some((en, ene)) = expect {
        if n != en || ne != ene {
            return Err(dims(format!("step {t}: state/noise dimensions change over time")));
        }
    }
    ensure_shape(&s.state_noise, n, ne, &format!("step {t}: state noise loading"))?;
    let m = s.measurement.nrows();
    ensure_shape(&s.measurement, m, n, &format!("step {t}: measurement matrix"))?;
    ensure_shape(&s.measurement_noise, m, ne, &format!("step {t}: measurement noise loading"))?;
    for mat in [&s.transition, &s.measurement, &s.state_noise, &s.measurement_noise] {
        if !is_finite(mat) {
            return Err(Error::NonFiniteInput(format!("step {t} matrices")));
        }
    }
    Ok((n, ne))
}

fn check_initial(mean: &DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    ensure_len(mean, n, "initial mean")?;
    ensure_shape(&cov, n, n, "initial covariance")?;
    if !is_finite(&cov) || mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("initial belief".into()));
    }
    let cov = symmetrized(cov);
    let lowest = min_eigenvalue(&cov);
    if lowest < -PSD_NEG_TOL {
        return Err(Error::NotPsd { min_eigenvalue: lowest });
    }
    debug_assert!(max_asymmetry(&cov) <= 1e-12);
    Ok(cov)
}

/// Mean and covariance of a state at time `time` given observations up to
/// and including `given` (`given = time - 1` is a one-step prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time: usize,
    pub given: Option<usize>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, time: usize, given: Option<usize>) -> Self {
        Self { mean, cov, time, given }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

impl fmt::Display for GaussianBelief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.given {
            Some(s) => write!(f, "N(x[{}|{}], dim {})", self.time, s, self.dim()),
            None => write!(f, "N(x[{}|-], dim {})", self.time, self.dim()),
        }
    }
}

/// Observations indexed by time with per-entry missing markers. Rows may have
/// different lengths, matching `n_m(t)` of the model they are filtered with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationPanel {
    values: Vec<DVector<f64>>,
    observed: Vec<Vec<bool>>,
}

impl ObservationPanel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fully observed rows.
    pub fn from_rows(rows: Vec<DVector<f64>>) -> Result<Self> {
        let mut p = Self::new();
        for r in rows {
            let mask = vec![true; r.len()];
            p.push_masked(r, mask)?;
        }
        Ok(p)
    }

    /// Rows with `None` marking missing entries.
    pub fn from_options(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let mut p = Self::new();
        for r in rows {
            p.push_optional(r)?;
        }
        Ok(p)
    }

    /// `len` rows of width `width`, all missing.
    pub fn all_missing(len: usize, width: usize) -> Self {
        Self {
            values: vec![DVector::zeros(width); len],
            observed: vec![vec![false; width]; len],
        }
    }

    pub fn push_optional(&mut self, row: &[Option<f64>]) -> Result<()> {
        let values = DVector::from_iterator(row.len(), row.iter().map(|v| v.unwrap_or(0.0)));
        let mask = row.iter().map(|v| v.is_some()).collect();
        self.push_masked(values, mask)
    }

    pub fn push_masked(&mut self, values: DVector<f64>, observed: Vec<bool>) -> Result<()> {
        if values.len() != observed.len() {
            return Err(dims("observation row and mask lengths differ"));
        }
        let t = self.values.len();
        for (i, (&v, &o)) in values.iter().zip(&observed).enumerate() {
            if o && !v.is_finite() {
                return Err(Error::NonFiniteInput(format!("observation ({t}, {i})")));
            }
        }
        self.values.push(values);
        self.observed.push(observed);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self, t: usize) -> usize {
        self.values[t].len()
    }

    pub fn row(&self, t: usize) -> &DVector<f64> {
        &self.values[t]
    }

    pub fn is_observed(&self, t: usize, i: usize) -> bool {
        self.observed[t][i]
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.observed[t][i].then(|| self.values[t][i])
    }

    pub fn observed_indices(&self, t: usize) -> Vec<usize> {
        self.observed[t].iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i).collect()
    }

    /// Concatenates two panels column-wise. An empty panel stands for an
    /// all-missing block of the given width.
    pub fn hconcat(left: &Self, left_width: usize, right: &Self, right_width: usize) -> Result<Self> {
        if !left.is_empty() && !right.is_empty() && left.len() != right.len() {
            return Err(dims(format!(
                "panels to concatenate have different lengths ({} vs {})",
                left.len(),
                right.len()
            )));
        }
        let mut out = Self::new();
        for t in 0..left.len().max(right.len()) {
            let (a, am) = left.row_or_missing(t, left_width);
            let (b, bm) = right.row_or_missing(t, right_width);
            let values = DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
            let mask = am.into_iter().chain(bm).collect();
            out.push_masked(values, mask)?;
        }
        Ok(out)
    }

    fn row_or_missing(&self, t: usize, width: usize) -> (DVector<f64>, Vec<bool>) {
        if t < self.len() {
            (self.values[t].clone(), self.observed[t].clone())
        } else {
            (DVector::zeros(width), vec![false; width])
        }
    }

    /// Subtracts `offset` from every row (observed entries only).
    pub fn demeaned(&self, offset: &DVector<f64>) -> Result<Self> {
        let mut out = self.clone();
        for t in 0..out.len() {
            ensure_len(&out.values[t], offset.len(), "observation row")?;
            for i in 0..offset.len() {
                if out.observed[t][i] {
                    out.values[t][i] -= offset[i];
                }
            }
        }
        Ok(out)
    }
}
