//! Historical estimation and the aggregated historical DLM.
//!
//! Macro and factor blocks combine into one model in deviation form:
//!
//! ```text
//! x̃[t+1]      = A x̃[t] + [G 0] (e'[t], e''[t])
//! (ỹ[t], f̃[t]) = [B; Γ] x̃[t] + [[H, 0], [F', F'']] (e'[t], e''[t])
//! ```
//!
//! with `x = x̄ + x̃`, `y = ȳ + ỹ`, `f = f̄ + f̃`.

mod niw;
mod var;

pub use niw::{estimate_link_niw, sample_link, NiwPosterior};
pub use var::{companion_form, estimate_var_sur};

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::gaussdlm::{
    kalman_filter, kalman_smoother, simulation_smoother, stationary_init, DlmSpec, GaussianBelief, ObservationPanel,
    SimulatedPaths, SmoothResult, StepMatrices,
};
use crate::linalg::{ensure_len, ensure_shape, ensure_square, hstack, psd_cholesky, vstack};
use crate::markets::FactorModelSpec;

/// Dimensions of a parameter bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaDims {
    pub n_x: usize,
    pub n_y: usize,
    pub n_f: usize,
    /// Width of the macro disturbance `e'`.
    pub n_e1: usize,
    /// Width of the factor-only disturbance `e''`.
    pub n_e2: usize,
}

/// Model parameters `A, B, Γ, G, H, F', F'', x̄, ȳ, f̄`.
///
/// `initial` is the belief about `x̃[1]`; when absent the stationary
/// distribution of the macro block is used.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBundle {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub f_prime: DMatrix<f64>,
    pub f_second: DMatrix<f64>,
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub f_bar: DVector<f64>,
    pub initial: Option<GaussianBelief>,
    dims: ThetaDims,
}

impl ThetaBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        gamma: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        f_prime: DMatrix<f64>,
        f_second: DMatrix<f64>,
        x_bar: DVector<f64>,
        y_bar: DVector<f64>,
        f_bar: DVector<f64>,
    ) -> Result<Self> {
        let n_x = ensure_square(&a, "A")?;
        let n_y = b.nrows();
        let n_f = gamma.nrows();
        let n_e1 = g.ncols();
        let n_e2 = f_second.ncols();
        ensure_shape(&b, n_y, n_x, "B")?;
        ensure_shape(&gamma, n_f, n_x, "Gamma")?;
        ensure_shape(&g, n_x, n_e1, "G")?;
        ensure_shape(&h, n_y, n_e1, "H")?;
        ensure_shape(&f_prime, n_f, n_e1, "F'")?;
        ensure_shape(&f_second, n_f, n_e2, "F''")?;
        ensure_len(&x_bar, n_x, "x_bar")?;
        ensure_len(&y_bar, n_y, "y_bar")?;
        ensure_len(&f_bar, n_f, "f_bar")?;
        for (m, name) in [(&a, "A"), (&b, "B"), (&gamma, "Gamma"), (&g, "G"), (&h, "H"), (&f_prime, "F'"), (&f_second, "F''")] {
            if !crate::linalg::is_finite(m) {
                return Err(Error::NonFiniteInput(name.into()));
            }
        }
        let dims = ThetaDims { n_x, n_y, n_f, n_e1, n_e2 };
        Ok(Self { a, b, gamma, g, h, f_prime, f_second, x_bar, y_bar, f_bar, initial: None, dims })
    }

    /// Builds the bundle from a factor covariance alone, partitioning it as
    /// `F' = 0`, `F'' = chol(Σᶠ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_factor_covariance(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        gamma: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        factor_cov: &DMatrix<f64>,
        x_bar: DVector<f64>,
        y_bar: DVector<f64>,
        f_bar: DVector<f64>,
    ) -> Result<Self> {
        let f_second = psd_cholesky(factor_cov)?;
        let f_prime = DMatrix::zeros(f_second.nrows(), g.ncols());
        Self::new(a, b, gamma, g, h, f_prime, f_second, x_bar, y_bar, f_bar)
    }

    pub fn with_initial(mut self, initial: GaussianBelief) -> Result<Self> {
        ensure_len(&initial.mean, self.dims.n_x, "initial mean")?;
        ensure_shape(&initial.cov, self.dims.n_x, self.dims.n_x, "initial covariance")?;
        self.initial = Some(initial);
        Ok(self)
    }

    pub fn dims(&self) -> ThetaDims {
        self.dims
    }

    /// Belief about `x̃[1]` before any data.
    pub fn initial_belief(&self) -> Result<GaussianBelief> {
        match &self.initial {
            Some(b) => Ok(b.clone()),
            None => stationary_init(&self.a, &self.g),
        }
    }

    pub fn link(&self) -> FactorModelSpec {
        FactorModelSpec {
            f_bar: self.f_bar.clone(),
            gamma: self.gamma.clone(),
            f_prime: self.f_prime.clone(),
            f_second: self.f_second.clone(),
        }
    }

    /// Replaces the factor block; the macro block is kept.
    pub fn with_link(&self, link: FactorModelSpec) -> Result<Self> {
        let mut out = Self::new(
            self.a.clone(),
            self.b.clone(),
            link.gamma,
            self.g.clone(),
            self.h.clone(),
            link.f_prime,
            link.f_second,
            self.x_bar.clone(),
            self.y_bar.clone(),
            link.f_bar,
        )?;
        out.initial = self.initial.clone();
        Ok(out)
    }

    /// `Σᶠ = F' F'ᵀ + F'' F''ᵀ`.
    pub fn factor_cov(&self) -> DMatrix<f64> {
        self.link().factor_cov()
    }

    /// The macro block alone as a DLM over `len` steps.
    pub fn macro_dlm(&self, len: usize) -> Result<DlmSpec> {
        let init = self.initial_belief()?;
        let step = StepMatrices {
            transition: self.a.clone(),
            measurement: self.b.clone(),
            state_noise: self.g.clone(),
            measurement_noise: self.h.clone(),
        };
        DlmSpec::homogeneous(step, len, init.mean, init.cov)
    }
}

/// The aggregated historical DLM plus what is needed to undo it.
#[derive(Debug, Clone)]
pub struct JointDlm {
    pub spec: DlmSpec,
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub f_bar: DVector<f64>,
    pub dims: ThetaDims,
}

impl JointDlm {
    /// Measurement offsets `(ȳ, f̄)`.
    pub fn offsets(&self) -> DVector<f64> {
        crate::linalg::vstack_vec(&[&self.y_bar, &self.f_bar])
    }
}

/// Stacks the macro and factor blocks into one deviation-form DLM over `len`
/// steps. Observations are `(y, f)` minus `(ȳ, f̄)`.
pub fn assemble_joint_dlm(theta: &ThetaBundle, len: usize) -> Result<JointDlm> {
    let d = theta.dims();
    let init = theta.initial_belief()?;
    let state_noise = hstack(&[&theta.g, &DMatrix::zeros(d.n_x, d.n_e2)])?;
    let measurement = vstack(&[&theta.b, &theta.gamma])?;
    let top = hstack(&[&theta.h, &DMatrix::zeros(d.n_y, d.n_e2)])?;
    let bottom = hstack(&[&theta.f_prime, &theta.f_second])?;
    let measurement_noise = vstack(&[&top, &bottom])?;
    let step = StepMatrices { transition: theta.a.clone(), measurement, state_noise, measurement_noise };
    let spec = DlmSpec::homogeneous(step, len, init.mean, init.cov)?;
    Ok(JointDlm {
        spec,
        x_bar: theta.x_bar.clone(),
        y_bar: theta.y_bar.clone(),
        f_bar: theta.f_bar.clone(),
        dims: d,
    })
}

/// Inverse of [`assemble_joint_dlm`].
pub fn disassemble_joint_dlm(joint: &JointDlm) -> Result<ThetaBundle> {
    let d = joint.dims;
    if joint.spec.is_empty() {
        return Err(Error::InvalidArgument("cannot disassemble a zero-length DLM".into()));
    }
    let s = joint.spec.step(0);
    if s.measurement.nrows() != d.n_y + d.n_f || s.state_noise.ncols() != d.n_e1 + d.n_e2 {
        return Err(dims("joint DLM does not match its recorded dimensions"));
    }
    let a = s.transition.clone();
    let b = s.measurement.rows(0, d.n_y).into_owned();
    let gamma = s.measurement.rows(d.n_y, d.n_f).into_owned();
    let g = s.state_noise.columns(0, d.n_e1).into_owned();
    let h = s.measurement_noise.view((0, 0), (d.n_y, d.n_e1)).into_owned();
    let f_prime = s.measurement_noise.view((d.n_y, 0), (d.n_f, d.n_e1)).into_owned();
    let f_second = s.measurement_noise.view((d.n_y, d.n_e1), (d.n_f, d.n_e2)).into_owned();
    let theta = ThetaBundle::new(
        a,
        b,
        gamma,
        g,
        h,
        f_prime,
        f_second,
        joint.x_bar.clone(),
        joint.y_bar.clone(),
        joint.f_bar.clone(),
    )?;
    theta.with_initial(GaussianBelief::new(
        joint.spec.initial_mean().clone(),
        joint.spec.initial_cov().clone(),
        0,
        None,
    ))
}

/// History of the macro block given `y` only.
#[derive(Debug, Clone)]
pub enum MacroHistory {
    /// Smoothed means and covariances of `x̃[t]` and `e'[t]`.
    Analytic(SmoothResult),
    /// Joint posterior draws of `x̃[1..T]` and `e'[1..T]`.
    Sampled(SimulatedPaths),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    Analytic,
    Sampled { n_paths: usize, seed: u64 },
}

/// Smooths the macro states and shocks on `y` (levels, missing entries
/// allowed). Factor data is deliberately not used.
pub fn smooth_macro_history(theta: &ThetaBundle, y: &ObservationPanel, mode: HistoryMode) -> Result<MacroHistory> {
    let spec = theta.macro_dlm(y.len())?;
    let data = y.demeaned(&theta.y_bar)?;
    match mode {
        HistoryMode::Analytic => {
            let filter = kalman_filter(&spec, &data)?;
            Ok(MacroHistory::Analytic(kalman_smoother(&spec, &filter)?))
        }
        HistoryMode::Sampled { n_paths, seed } => {
            Ok(MacroHistory::Sampled(simulation_smoother(&spec, &data, n_paths, seed)?))
        }
    }
}

/// Extension point for a Gibbs sampler over structural macro models whose
/// matrices are functions of deep parameters `π`. One sweep draws, in order,
/// the latent history given `(π, link, data)`, the link given `(π, history,
/// data)` (see [`estimate_link_niw`] and [`sample_link`]), and `π` given the
/// rest through a likelihood-based accept/reject step. Only the first two
/// draws are provided by this crate; implementors supply the structural
/// solver and the `π` step.
pub trait StructuralSampler {
    type Params: Clone;

    /// Maps deep parameters to the macro block of `θ`.
    fn solve(&self, params: &Self::Params) -> Result<ThetaBundle>;

    /// One accept/reject update of the deep parameters.
    fn update_params(
        &mut self,
        current: &Self::Params,
        link: &FactorModelSpec,
        history: &SimulatedPaths,
        seed: u64,
    ) -> Result<Self::Params>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn theta() -> ThetaBundle {
        ThetaBundle::new(
            dmatrix![0.5, 0.1; 0.0, 0.3],
            dmatrix![1.0, 0.0; 0.5, 1.0; 0.0, 2.0],
            dmatrix![0.2, -0.1],
            dmatrix![1.0, 0.0, 0.0; 0.3, 0.5, 0.0],
            dmatrix![0.0, 0.0, 0.1; 0.1, 0.0, 0.0; 0.0, 0.2, 0.0],
            dmatrix![0.1, 0.0, 0.0],
            dmatrix![0.3],
            DVector::from_vec(vec![0.02, 0.01]),
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            DVector::from_vec(vec![0.05]),
        )
        .unwrap()
    }

    #[test]
    fn assembly_round_trips() {
        let t = theta();
        let joint = assemble_joint_dlm(&t, 4).unwrap();
        let back = disassemble_joint_dlm(&joint).unwrap();
        assert_eq!(back.a, t.a);
        assert_eq!(back.b, t.b);
        assert_eq!(back.gamma, t.gamma);
        assert_eq!(back.g, t.g);
        assert_eq!(back.h, t.h);
        assert_eq!(back.f_prime, t.f_prime);
        assert_eq!(back.f_second, t.f_second);
        assert_eq!(back.x_bar, t.x_bar);
        assert_eq!(back.dims(), t.dims());
    }

    #[test]
    fn no_factors_reproduces_macro_dlm() {
        let t = theta();
        let bare = ThetaBundle::new(
            t.a.clone(),
            t.b.clone(),
            DMatrix::zeros(0, 2),
            t.g.clone(),
            t.h.clone(),
            DMatrix::zeros(0, 3),
            DMatrix::zeros(0, 0),
            t.x_bar.clone(),
            t.y_bar.clone(),
            DVector::zeros(0),
        )
        .unwrap();
        let joint = assemble_joint_dlm(&bare, 3).unwrap();
        assert_eq!(joint.spec, bare.macro_dlm(3).unwrap());
    }

    #[test]
    fn default_partition_has_no_macro_loading() {
        let t = theta();
        let sf = dmatrix![0.04, 0.01; 0.01, 0.09];
        let b = ThetaBundle::with_factor_covariance(
            t.a.clone(),
            t.b.clone(),
            DMatrix::zeros(2, 2),
            t.g.clone(),
            t.h.clone(),
            &sf,
            t.x_bar.clone(),
            t.y_bar.clone(),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(b.f_prime, DMatrix::zeros(2, 3));
        assert!(crate::linalg::max_abs(&(b.factor_cov() - sf)) < 1e-15);
    }

    #[test]
    fn observable_var_history_equals_data() {
        let t = ThetaBundle::new(
            dmatrix![0.5, 0.0; 0.2, 0.4],
            DMatrix::identity(2, 2),
            DMatrix::zeros(0, 2),
            dmatrix![1.0, 0.0; 0.5, 1.0],
            DMatrix::zeros(2, 2),
            DMatrix::zeros(0, 2),
            DMatrix::zeros(0, 0),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::zeros(0),
        )
        .unwrap();
        let rows = vec![
            DVector::from_vec(vec![1.5, -0.7]),
            DVector::from_vec(vec![0.2, -1.4]),
            DVector::from_vec(vec![1.1, -0.9]),
        ];
        let y = ObservationPanel::from_rows(rows.clone()).unwrap();
        let MacroHistory::Analytic(s) = smooth_macro_history(&t, &y, HistoryMode::Analytic).unwrap() else {
            unreachable!()
        };
        for (step, row) in s.steps.iter().zip(&rows) {
            let expect = row - &t.y_bar;
            assert!((&step.state.mean - expect).abs().max() < 1e-12);
            assert!(step.state.cov.abs().max() < 1e-12);
        }
    }
}
