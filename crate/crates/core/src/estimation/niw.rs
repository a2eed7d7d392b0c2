//! Conjugate normal-inverse-Wishart regression for the macro-financial link.
//!
//! The regression is `𝒴 = 𝒳 𝓑 + 𝓔` with rows `f[t]ᵀ` in `𝒴`, rows
//! `[1, x̃[t]ᵀ, e'[t]ᵀ]` in `𝒳`, `𝓑 = [f̄ Γ F']ᵀ` and row covariance
//! `Σ_𝓔 = F'' F''ᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::error::{dims, Error, Result};
use crate::linalg::{ensure_shape, psd_cholesky, sorted_eigen, spd_inverse, symmetrized};
use crate::markets::FactorModelSpec;
use crate::rng::{standard_normal_matrix, substream};

/// Parameters of `Σ_𝓔 ~ W⁻¹(V, ν)`, `𝓑 | Σ_𝓔 ~ MN(B, Λ⁻¹, Σ_𝓔)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPosterior {
    /// k × k with `k = 1 + n_x + n_e1`.
    pub lambda: DMatrix<f64>,
    /// k × n_f.
    pub b: DMatrix<f64>,
    pub nu: f64,
    /// n_f × n_f.
    pub v: DMatrix<f64>,
    n_x: usize,
    n_e1: usize,
}

impl NiwPosterior {
    pub fn new(lambda: DMatrix<f64>, b: DMatrix<f64>, nu: f64, v: DMatrix<f64>, n_x: usize, n_e1: usize) -> Result<Self> {
        let k = 1 + n_x + n_e1;
        let n_f = b.ncols();
        ensure_shape(&lambda, k, k, "NIW precision")?;
        ensure_shape(&b, k, n_f, "NIW coefficient location")?;
        ensure_shape(&v, n_f, n_f, "NIW scale")?;
        Ok(Self { lambda: symmetrized(lambda), b, nu, v: symmetrized(v), n_x, n_e1 })
    }

    /// The flat prior: `Λ = 0`, `B = 0`, `V = 0`, `ν = n_f - n_x - n_e1`.
    pub fn flat(n_x: usize, n_e1: usize, n_f: usize) -> Self {
        let k = 1 + n_x + n_e1;
        Self {
            lambda: DMatrix::zeros(k, k),
            b: DMatrix::zeros(k, n_f),
            nu: n_f as f64 - n_x as f64 - n_e1 as f64,
            v: DMatrix::zeros(n_f, n_f),
            n_x,
            n_e1,
        }
    }

    pub fn n_regressors(&self) -> usize {
        1 + self.n_x + self.n_e1
    }

    pub fn n_factors(&self) -> usize {
        self.b.ncols()
    }

    /// Splits a coefficient matrix into `(f̄, Γ, F')`.
    pub fn split(&self, b: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let f_bar = b.row(0).transpose();
        let gamma = b.rows(1, self.n_x).transpose();
        let f_prime = b.rows(1 + self.n_x, self.n_e1).transpose();
        (f_bar, gamma, f_prime)
    }

    /// `E[Σ_𝓔] = V / (ν - n_f - 1)`, defined for `ν > n_f + 1`.
    pub fn inverse_wishart_mean(&self) -> Result<DMatrix<f64>> {
        let n_f = self.n_factors();
        if !(self.nu > n_f as f64 + 1.0) {
            return Err(Error::ImproperPosterior { dof: self.nu, dim: n_f });
        }
        Ok(&self.v / (self.nu - n_f as f64 - 1.0))
    }

    /// Point estimate of the link: `B` for the coefficients and the mean of
    /// `Σ_𝓔` (or the residual scatter scaled by `1/ν` when the mean is
    /// undefined) for `F''`.
    pub fn point_link(&self) -> Result<FactorModelSpec> {
        let (f_bar, gamma, f_prime) = self.split(&self.b);
        let cov = self.inverse_wishart_mean().or_else(|_| {
            if self.nu > 0.0 {
                Ok(&self.v / self.nu)
            } else {
                Err(Error::ImproperPosterior { dof: self.nu, dim: self.n_factors() })
            }
        })?;
        FactorModelSpec::new(f_bar, gamma, f_prime, psd_cholesky(&cov)?)
    }
}

/// Conjugate update of `prior` with the regression data. The three slices
/// are time-aligned: `x_tilde[t]`, `shocks[t]` and `factors[t]` (levels).
pub fn estimate_link_niw(
    x_tilde: &[DVector<f64>],
    shocks: &[DVector<f64>],
    factors: &[DVector<f64>],
    prior: &NiwPosterior,
) -> Result<NiwPosterior> {
    let t_len = x_tilde.len();
    if shocks.len() != t_len || factors.len() != t_len {
        return Err(dims(format!(
            "regression inputs have lengths {}, {}, {}",
            t_len,
            shocks.len(),
            factors.len()
        )));
    }
    if t_len == 0 {
        return Ok(prior.clone());
    }
    let k = prior.n_regressors();
    let n_f = prior.n_factors();
    let mut x = DMatrix::zeros(t_len, k);
    let mut y = DMatrix::zeros(t_len, n_f);
    for t in 0..t_len {
        if x_tilde[t].len() != prior.n_x || shocks[t].len() != prior.n_e1 || factors[t].len() != n_f {
            return Err(dims(format!("regression row {t} has the wrong width")));
        }
        x[(t, 0)] = 1.0;
        x.view_mut((t, 1), (1, prior.n_x)).copy_from(&x_tilde[t].transpose());
        x.view_mut((t, 1 + prior.n_x), (1, prior.n_e1)).copy_from(&shocks[t].transpose());
        y.row_mut(t).copy_from(&factors[t].transpose());
    }
    let lambda = symmetrized(&prior.lambda + x.transpose() * &x);
    let singular = || Error::RankDeficientDesign(format!("posterior precision is singular ({t_len} rows, {k} regressors)"));
    let (values, _) = sorted_eigen(&lambda);
    if values[k - 1] <= 1e-12 * values[0] {
        return Err(singular());
    }
    let chol = lambda.clone().cholesky().ok_or_else(singular)?;
    let b = chol.solve(&(x.transpose() * &y + &prior.lambda * &prior.b));
    let resid = &y - &x * &b;
    let shift = &b - &prior.b;
    let v = symmetrized(&prior.v + resid.transpose() * &resid + shift.transpose() * &prior.lambda * &shift);
    Ok(NiwPosterior { lambda, b, nu: prior.nu + t_len as f64, v, n_x: prior.n_x, n_e1: prior.n_e1 })
}

/// One joint draw of `(𝓑, Σ_𝓔)` mapped to a factor block, with
/// `F'' = chol(Σ_𝓔)`.
pub fn sample_link(posterior: &NiwPosterior, seed: u64) -> Result<FactorModelSpec> {
    let sampler = LinkSampler::new(posterior)?;
    sampler.draw(&mut substream(seed, 0))
}

/// Reusable sampler; factorizations are computed once.
pub(crate) struct LinkSampler<'a> {
    posterior: &'a NiwPosterior,
    scale_inv_chol: DMatrix<f64>,
    row_chol: DMatrix<f64>,
}

impl<'a> LinkSampler<'a> {
    pub(crate) fn new(posterior: &'a NiwPosterior) -> Result<Self> {
        let n_f = posterior.n_factors();
        if !(posterior.nu > n_f as f64 - 1.0) {
            return Err(Error::ImproperPosterior { dof: posterior.nu, dim: n_f });
        }
        let scale_inv = spd_inverse(&posterior.v, "inverse-Wishart scale")?;
        let scale_inv_chol = scale_inv.cholesky().expect("inverse of SPD is SPD").l();
        let row_cov = spd_inverse(&posterior.lambda, "coefficient precision")?;
        let row_chol = psd_cholesky(&row_cov)?;
        Ok(Self { posterior, scale_inv_chol, row_chol })
    }

    /// `Σ ~ W⁻¹(V, ν)` by inverting a Bartlett-decomposed Wishart draw.
    pub(crate) fn draw_cov<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let n = self.posterior.n_factors();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let chi = ChiSquared::new(self.posterior.nu - i as f64)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(rand_distr::StandardNormal);
            }
        }
        let la = &self.scale_inv_chol * a;
        let wishart = symmetrized(&la * la.transpose());
        spd_inverse(&wishart, "Wishart draw")
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<FactorModelSpec> {
        let cov = self.draw_cov(rng)?;
        let cov_chol = psd_cholesky(&cov)?;
        let z = standard_normal_matrix(rng, self.posterior.n_regressors(), self.posterior.n_factors());
        let coef = &self.posterior.b + &self.row_chol * z * cov_chol.transpose();
        let (f_bar, gamma, f_prime) = self.posterior.split(&coef);
        FactorModelSpec::new(f_bar, gamma, f_prime, cov_chol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_returns_prior() {
        let prior = NiwPosterior::flat(2, 1, 3);
        assert_eq!(estimate_link_niw(&[], &[], &[], &prior).unwrap(), prior);
    }

    #[test]
    fn flat_prior_with_too_few_rows_is_rank_deficient() {
        let prior = NiwPosterior::flat(2, 1, 1);
        let x = vec![DVector::from_vec(vec![1.0, 2.0]); 2];
        let e = vec![DVector::from_vec(vec![0.5]); 2];
        let f = vec![DVector::from_vec(vec![0.1]); 2];
        assert!(matches!(estimate_link_niw(&x, &e, &f, &prior), Err(Error::RankDeficientDesign(_))));
    }

    #[test]
    fn sampling_refuses_improper_posterior() {
        let mut post = NiwPosterior::flat(1, 1, 3);
        post.v = DMatrix::identity(3, 3);
        post.lambda = DMatrix::identity(3, 3);
        post.nu = 1.5;
        assert!(matches!(sample_link(&post, 1), Err(Error::ImproperPosterior { .. })));
        post.nu = 2.5;
        assert!(sample_link(&post, 1).is_ok());
        assert!(post.inverse_wishart_mean().is_err());
    }
}
