//! Black-Litterman posterior and its embedding as a single-period forecast.
//!
//! The prior is `μ ~ N(π, τΣ)` with `π = r_f + Σ w λ`; views are
//! `v = P μ + ξ`, `ξ ~ N(0, Ω)`. The embedding uses one macro state (the
//! market price of risk, constant), two factors (risk-free rate and market
//! excess return) and CAPM exposures, so the forecast of `μ` at step 0 is the
//! BL posterior.

use nalgebra::{dmatrix, DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::estimation::ThetaBundle;
use crate::forecast::{conditional_forecast, Scenario, SeriesKind};
use crate::gaussdlm::GaussianBelief;
use crate::linalg::{ensure_len, ensure_shape, ensure_square, max_abs, max_abs_vec, min_eigenvalue, spd_inverse, sym_pinv, symmetrized, PSD_NEG_TOL};
use crate::markets::{AlphaPersistence, MarketSpec};
use crate::views::{compile_view, View, ViewBlock, ViewKind};

#[derive(Debug, Clone, PartialEq)]
pub struct BlInputs {
    pub r_f: f64,
    /// Asset covariance, positive definite.
    pub sigma: DMatrix<f64>,
    /// Market weights.
    pub w: DVector<f64>,
    /// Market price of risk.
    pub lambda: f64,
    pub tau: f64,
    /// Pick matrix, views × assets.
    pub p: DMatrix<f64>,
    pub v: DVector<f64>,
    /// View uncertainty, positive semidefinite (zero rows for exact views).
    pub omega: DMatrix<f64>,
}

impl BlInputs {
    pub fn validate(&self) -> Result<()> {
        let n = ensure_square(&self.sigma, "asset covariance")?;
        ensure_len(&self.w, n, "market weights")?;
        ensure_shape(&self.p, self.v.len(), n, "pick matrix")?;
        ensure_shape(&self.omega, self.v.len(), self.v.len(), "view uncertainty")?;
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::NonPositiveInput(format!("tau must be finite and nonnegative, got {}", self.tau)));
        }
        if self.sigma.clone().cholesky().is_none() {
            return Err(Error::SingularSystem("asset covariance is not positive definite".into()));
        }
        let lowest = min_eigenvalue(&symmetrized(self.omega.clone()));
        if lowest < -PSD_NEG_TOL {
            return Err(Error::NotPsd { min_eigenvalue: lowest });
        }
        let var = self.market_variance();
        if !(var > 0.0) {
            return Err(Error::DegenerateMarket(var));
        }
        Ok(())
    }

    /// `σ_m² = wᵀ Σ w`.
    pub fn market_variance(&self) -> f64 {
        (self.w.transpose() * &self.sigma * &self.w)[(0, 0)]
    }

    /// `π = r_f + Σ w λ`.
    pub fn prior_mean(&self) -> DVector<f64> {
        (&self.sigma * &self.w) * self.lambda + DVector::from_element(self.w.len(), self.r_f)
    }
}

/// Information form: `M = (τΣ)⁻¹ + PᵀΩ⁻¹P`, mean `M⁻¹((τΣ)⁻¹π + PᵀΩ⁻¹v)`,
/// covariance `M⁻¹`. Needs `τ > 0` and `Ω` positive definite.
pub fn bl_posterior_information(inputs: &BlInputs) -> Result<(DVector<f64>, DMatrix<f64>)> {
    inputs.validate()?;
    if !(inputs.tau > 0.0) {
        return Err(Error::SingularSystem("information form needs tau > 0".into()));
    }
    let prior_prec = spd_inverse(&(inputs.tau * &inputs.sigma), "prior covariance")?;
    let omega_inv = spd_inverse(&inputs.omega, "view uncertainty")?;
    let pt_oi = inputs.p.transpose() * &omega_inv;
    let precision = symmetrized(&prior_prec + &pt_oi * &inputs.p);
    let cov = spd_inverse(&precision, "posterior precision")?;
    let mean = &cov * (&prior_prec * inputs.prior_mean() + &pt_oi * &inputs.v);
    Ok((mean, cov))
}

/// Gain form: `π + τΣPᵀ S⁺ (v - Pπ)` with `S = PτΣPᵀ + Ω`, covariance
/// `τΣ - τΣPᵀ S⁺ PτΣ`. Exact views are allowed as long as they are mutually
/// consistent.
pub fn bl_posterior_gain(inputs: &BlInputs) -> Result<(DVector<f64>, DMatrix<f64>)> {
    inputs.validate()?;
    let prior = inputs.tau * &inputs.sigma;
    let pi = inputs.prior_mean();
    if inputs.v.is_empty() {
        return Ok((pi, prior));
    }
    let s = symmetrized(&inputs.p * &prior * inputs.p.transpose() + &inputs.omega);
    let s_pinv = sym_pinv(&s).inverse;
    let resid = &inputs.v - &inputs.p * &pi;
    let projected = &s * (&s_pinv * &resid);
    if max_abs_vec(&(&projected - &resid)) > 1e-8 * (1.0 + max_abs_vec(&resid)) {
        return Err(Error::SingularSystem("exact views are mutually inconsistent".into()));
    }
    let gain = &prior * inputs.p.transpose() * s_pinv;
    let mean = &pi + &gain * resid;
    let cov = symmetrized(&prior - &gain * &inputs.p * &prior);
    Ok((mean, cov))
}

/// Posterior moments of `μ`, in information form when it is defined and in
/// gain form otherwise.
pub fn bl_posterior(inputs: &BlInputs) -> Result<(DVector<f64>, DMatrix<f64>)> {
    inputs.validate()?;
    let omega_pd = inputs.omega.nrows() > 0 && inputs.omega.clone().cholesky().is_some();
    if inputs.tau > 0.0 && omega_pd {
        bl_posterior_information(inputs)
    } else {
        bl_posterior_gain(inputs)
    }
}

/// A single-period forecasting problem whose step-0 mean asset return
/// coincides with the BL posterior.
#[derive(Debug, Clone)]
pub struct BlEmbedding {
    pub theta: ThetaBundle,
    pub psi: MarketSpec,
    pub view: View,
    pub block: ViewBlock,
    /// Belief about the market price of risk: `N(λ, τ/σ_m²)`.
    pub initial: GaussianBelief,
}

/// Builds the embedding:
///
/// ```text
/// A = B = 1, G = H = 0, Γ = [0; σ_m²], F' = 0, F'' = [0; σ_m], f̄ = [r_f; 0]
/// β = [1, Σw/σ_m²],  Σʳ = Σ - Σwwᵀ Σ / σ_m²,  α constant
/// ```
pub fn bl_embed(inputs: &BlInputs) -> Result<BlEmbedding> {
    inputs.validate()?;
    let n = inputs.w.len();
    let var_m = inputs.market_variance();
    let sw = &inputs.sigma * &inputs.w;
    let theta = ThetaBundle::new(
        dmatrix![1.0],
        dmatrix![1.0],
        dmatrix![0.0; var_m],
        dmatrix![0.0],
        dmatrix![0.0],
        DMatrix::zeros(2, 1),
        dmatrix![0.0; var_m.sqrt()],
        DVector::zeros(1),
        DVector::zeros(1),
        DVector::from_vec(vec![inputs.r_f, 0.0]),
    )?;
    let mut beta = DMatrix::from_element(n, 2, 1.0);
    beta.set_column(1, &(&sw / var_m));
    let residual = symmetrized(&inputs.sigma - &sw * sw.transpose() / var_m);
    let psi = MarketSpec::homogeneous(beta, residual, inputs.tau, AlphaPersistence::ConstantAlpha, 0)?;
    let initial = GaussianBelief::new(
        DVector::from_element(1, inputs.lambda),
        DMatrix::from_element(1, 1, inputs.tau / var_m),
        0,
        Some(0),
    );
    let theta = theta.with_initial(initial.clone())?;
    let view = View::new(ViewKind::MeanAssetReturn, 0, inputs.p.clone(), inputs.v.clone(), inputs.omega.clone())?;
    let block = compile_view(&view, &theta, &psi)?;
    Ok(BlEmbedding { theta, psi, view, block, initial })
}

#[derive(Debug, Clone)]
pub struct BlEquivalenceReport {
    pub bl_mean: DVector<f64>,
    pub bl_cov: DMatrix<f64>,
    pub csg_mean: DVector<f64>,
    pub csg_cov: DMatrix<f64>,
    pub mean_discrepancy: f64,
    pub cov_discrepancy: f64,
}

impl BlEquivalenceReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.mean_discrepancy.max(self.cov_discrepancy)
    }
}

/// Runs [`bl_posterior`] and the forecasting pipeline on [`bl_embed`] and
/// reports the max-abs differences of the mean and covariance of `μ`.
pub fn bl_equivalence_check(inputs: &BlInputs) -> Result<BlEquivalenceReport> {
    let (bl_mean, bl_cov) = bl_posterior(inputs)?;
    let emb = bl_embed(inputs)?;
    let scenario = Scenario::new(emb.psi.clone(), vec![emb.view.clone()], 0);
    let panel = conditional_forecast(&emb.theta, &emb.initial, &scenario)?;
    let mu = panel.core(SeriesKind::Mu);
    let (csg_mean, csg_cov) = (mu.mean[0].clone(), mu.cov[0].clone());
    if csg_mean.len() != bl_mean.len() {
        return Err(dims("embedded forecast has the wrong number of assets"));
    }
    let mean_discrepancy = max_abs_vec(&(&csg_mean - &bl_mean));
    let cov_discrepancy = max_abs(&(&csg_cov - &bl_cov));
    Ok(BlEquivalenceReport { bl_mean, bl_cov, csg_mean, csg_cov, mean_discrepancy, cov_discrepancy })
}
