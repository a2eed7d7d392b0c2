//! Financial markets model: factor returns, asset returns and the alpha
//! process.
//!
//! ```text
//! r[t] = α[t] + β[t] f[t] + εʳ[t]        εʳ ~ N(0, Σʳ[t])
//! f[t] = μᶠ[t] + F' e'[t] + F'' e''[t]   μᶠ[t] = f̄ + Γ x̃[t]
//! α[t+1] = Φ α[t] + S[t] e'''[t]         S Sᵀ = τ Σʳ - τ Φ Σʳ Φᵀ
//! ```
//!
//! Units are whatever the caller feeds in (typically per-period log returns);
//! nothing here converts between frequencies.

mod nelson_siegel;

pub use nelson_siegel::{
    bond_log_price_coefficients, bond_price, default_lambda_grid, ns_basis, ns_design, ns_fit,
    NelsonSiegelFit,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::gaussdlm::solve_discrete_lyapunov;
use crate::linalg::{ensure_len, ensure_shape, ensure_square, max_abs, min_eigenvalue, psd_factor, symmetrized, PSD_NEG_TOL};

/// Persistence of the alpha process.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaPersistence {
    /// Diagonal `Φ` with entries in (-1, 1).
    Diagonal(DVector<f64>),
    /// The `Φ → I` limit: alpha is an unknown constant and never innovates.
    ConstantAlpha,
}

/// Future market parameters `β[t]`, `Σʳ[t]`, `τ` and `Φ` for horizon steps
/// `0..=H`, where step 0 is the present.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    betas: Vec<DMatrix<f64>>,
    residual_covs: Vec<DMatrix<f64>>,
    tau: f64,
    persistence: AlphaPersistence,
}

impl MarketSpec {
    pub fn new(
        betas: Vec<DMatrix<f64>>,
        residual_covs: Vec<DMatrix<f64>>,
        tau: f64,
        persistence: AlphaPersistence,
    ) -> Result<Self> {
        if betas.len() != residual_covs.len() {
            return Err(dims(format!(
                "{} exposure matrices but {} residual covariances",
                betas.len(),
                residual_covs.len()
            )));
        }
        if betas.is_empty() {
            return Err(Error::InvalidArgument("market spec needs at least the present step".into()));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::NonPositiveInput(format!("tau must be finite and nonnegative, got {tau}")));
        }
        let (n_assets, n_f) = betas[0].shape();
        let mut covs = Vec::with_capacity(residual_covs.len());
        for (k, (b, s)) in betas.iter().zip(residual_covs).enumerate() {
            ensure_shape(b, n_assets, n_f, &format!("beta at step {k}"))?;
            ensure_shape(&s, n_assets, n_assets, &format!("residual covariance at step {k}"))?;
            let s = symmetrized(s);
            let lowest = min_eigenvalue(&s);
            if lowest < -PSD_NEG_TOL {
                return Err(Error::NotPsd { min_eigenvalue: lowest });
            }
            covs.push(s);
        }
        if let AlphaPersistence::Diagonal(phi) = &persistence {
            ensure_len(phi, n_assets, "alpha persistence")?;
            if let Some(bad) = phi.iter().find(|p| !(p.abs() < 1.0)) {
                return Err(Error::InvalidArgument(format!(
                    "alpha persistence {bad} outside (-1, 1); use ConstantAlpha for the unit limit"
                )));
            }
        }
        Ok(Self { betas, residual_covs: covs, tau, persistence })
    }

    /// Same exposures and residual covariance at every step `0..=horizon`.
    pub fn homogeneous(
        beta: DMatrix<f64>,
        residual_cov: DMatrix<f64>,
        tau: f64,
        persistence: AlphaPersistence,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(vec![beta; horizon + 1], vec![residual_cov; horizon + 1], tau, persistence)
    }

    /// A market with no assets, for forecasts that only involve macro and
    /// factor variables.
    pub fn without_assets(n_factors: usize, horizon: usize) -> Self {
        Self {
            betas: vec![DMatrix::zeros(0, n_factors); horizon + 1],
            residual_covs: vec![DMatrix::zeros(0, 0); horizon + 1],
            tau: 0.0,
            persistence: AlphaPersistence::ConstantAlpha,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.betas[0].nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.betas[0].ncols()
    }

    /// Last step covered.
    pub fn horizon(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn persistence(&self) -> &AlphaPersistence {
        &self.persistence
    }

    pub fn beta(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.betas.get(k)
    }

    pub fn residual_cov(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.residual_covs.get(k)
    }

    /// `Φ` as a dense matrix (the identity in the constant-alpha limit).
    pub fn phi(&self) -> DMatrix<f64> {
        match &self.persistence {
            AlphaPersistence::Diagonal(d) => DMatrix::from_diagonal(d),
            AlphaPersistence::ConstantAlpha => DMatrix::identity(self.n_assets(), self.n_assets()),
        }
    }

    /// Innovation loading `S[k]`, zero-padded to `n_assets` columns.
    pub fn alpha_loading(&self, k: usize) -> Result<DMatrix<f64>> {
        let cov = self.residual_cov(k).ok_or(Error::MissingMarketSpec(k))?;
        let n = self.n_assets();
        let s = match &self.persistence {
            AlphaPersistence::ConstantAlpha => DMatrix::zeros(n, 0),
            AlphaPersistence::Diagonal(_) => alpha_innovation_factor(cov, &self.phi(), self.tau)?,
        };
        let mut padded = DMatrix::zeros(n, n);
        padded.columns_mut(0, s.ncols()).copy_from(&s);
        Ok(padded)
    }
}

/// Factor block of the model: `μᶠ = f̄ + Γ x̃` and `f = μᶠ + F' e' + F'' e''`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelSpec {
    pub f_bar: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub f_prime: DMatrix<f64>,
    pub f_second: DMatrix<f64>,
}

impl FactorModelSpec {
    pub fn new(
        f_bar: DVector<f64>,
        gamma: DMatrix<f64>,
        f_prime: DMatrix<f64>,
        f_second: DMatrix<f64>,
    ) -> Result<Self> {
        let n_f = f_bar.len();
        ensure_shape(&gamma, n_f, gamma.ncols(), "factor link loadings")?;
        ensure_shape(&f_prime, n_f, f_prime.ncols(), "factor macro-noise loading")?;
        ensure_shape(&f_second, n_f, f_second.ncols(), "factor own-noise loading")?;
        Ok(Self { f_bar, gamma, f_prime, f_second })
    }

    pub fn n_factors(&self) -> usize {
        self.f_bar.len()
    }

    /// `Σᶠ = F' F'ᵀ + F'' F''ᵀ`.
    pub fn factor_cov(&self) -> DMatrix<f64> {
        symmetrized(&self.f_prime * self.f_prime.transpose() + &self.f_second * self.f_second.transpose())
    }
}

/// Conditional mean and covariance of asset returns at step `k` given
/// `α[k]` and `μᶠ[k]`: `μ = α + β μᶠ`, `Σ = β Σᶠ βᵀ + Σʳ`.
pub fn asset_moments(
    psi: &MarketSpec,
    factor_cov: &DMatrix<f64>,
    alpha: &DVector<f64>,
    mu_f: &DVector<f64>,
    k: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let beta = psi.beta(k).ok_or(Error::MissingBeta(k))?;
    let resid = psi.residual_cov(k).ok_or(Error::MissingMarketSpec(k))?;
    ensure_len(alpha, psi.n_assets(), "alpha")?;
    ensure_len(mu_f, psi.n_factors(), "mean factor return")?;
    ensure_shape(factor_cov, psi.n_factors(), psi.n_factors(), "factor covariance")?;
    let mean = alpha + beta * mu_f;
    let cov = symmetrized(beta * factor_cov * beta.transpose() + resid);
    Ok((mean, cov))
}

/// Factor `S` with `S Sᵀ = τ Σʳ - τ Φ Σʳ Φᵀ`, one column per nonzero
/// eigenvalue. Slightly negative eigenvalues are clipped.
pub fn alpha_innovation_factor(residual_cov: &DMatrix<f64>, phi: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let n = ensure_square(residual_cov, "residual covariance")?;
    ensure_shape(phi, n, n, "alpha persistence")?;
    let target = symmetrized(tau * residual_cov - tau * phi * residual_cov * phi.transpose());
    psd_factor(&target)
}

/// Outcome of comparing the stationary alpha covariance with `τ Σʳ`.
#[derive(Debug, Clone)]
pub struct AlphaStationarityReport {
    pub stationary_cov: DMatrix<f64>,
    pub target: DMatrix<f64>,
    pub max_abs_error: f64,
}

impl AlphaStationarityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_abs_error <= tol
    }
}

/// Solves for the stationary covariance of `α` under the step-0 parameters
/// and compares it with `τ Σʳ`. In the constant-alpha limit the prior
/// `τ Σʳ` persists unchanged, which is reported as stationary.
pub fn alpha_unconditional_check(psi: &MarketSpec) -> Result<AlphaStationarityReport> {
    let resid = psi.residual_cov(0).ok_or(Error::MissingMarketSpec(0))?;
    let target = psi.tau() * resid;
    let stationary_cov = match psi.persistence() {
        AlphaPersistence::ConstantAlpha => target.clone(),
        AlphaPersistence::Diagonal(_) => {
            let s = psi.alpha_loading(0)?;
            solve_discrete_lyapunov(&psi.phi(), &(&s * s.transpose()))?
        }
    };
    let max_abs_error = max_abs(&(&stationary_cov - &target));
    Ok(AlphaStationarityReport { stationary_cov, target, max_abs_error })
}
