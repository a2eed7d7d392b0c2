//! Nelson-Siegel yield curves.
//!
//! `R(τ) = f_L + B_S(τ, λ) f_S + B_C(τ, λ) f_C` with
//! `B_S = (1 - e^{-λτ}) / (λτ)` and `B_C = B_S - e^{-λτ}`.

use nalgebra::{DMatrix, DVector, Vector3};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{dims, Error, Result};

const TAYLOR_BELOW: f64 = 1e-4;

/// Loadings `(B_L, B_S, B_C)` for maturity `tau` (years) and decay `lambda`.
pub fn ns_basis(tau: f64, lambda: f64) -> Result<Vector3<f64>> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveInput(format!("maturity {tau}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveInput(format!("decay {lambda}")));
    }
    let x = lambda * tau;
    let (slope, curvature) = if x < TAYLOR_BELOW {
        (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0, x / 2.0 - x * x / 3.0 + x * x * x / 8.0)
    } else {
        let decay = (-x).exp();
        let slope = -(-x).exp_m1() / x;
        (slope, slope - decay)
    };
    Ok(Vector3::new(1.0, slope, curvature))
}

/// Design matrix `X(λ)` with one row per tenor.
pub fn ns_design(tenors: &[f64], lambda: f64) -> Result<DMatrix<f64>> {
    let mut x = DMatrix::zeros(tenors.len(), 3);
    for (i, &tau) in tenors.iter().enumerate() {
        x.row_mut(i).copy_from(&ns_basis(tau, lambda)?.transpose());
    }
    Ok(x)
}

/// 60 log-spaced decays on [0.05, 3] for maturities in years.
pub fn default_lambda_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.05_f64.ln(), 3.0_f64.ln(), 60);
    (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone)]
pub struct NelsonSiegelFit {
    pub lambda: f64,
    /// `(level, slope, curvature)` per time.
    pub factors: Vec<Vector3<f64>>,
    pub design: DMatrix<f64>,
    /// Mean squared residual per tenor across time.
    pub residual_variance: DVector<f64>,
    pub total_sse: f64,
}

struct Candidate {
    lambda: f64,
    design: DMatrix<f64>,
    projector: DMatrix<f64>,
    sse: f64,
}

/// Grid search over `λ`; for each candidate the factors at every time solve
/// the cross-sectional least-squares problem on `X(λ)`. Grid points whose
/// design is numerically rank-deficient are skipped.
pub fn ns_fit(yields: &[DVector<f64>], tenors: &[f64], grid: &[f64]) -> Result<NelsonSiegelFit> {
    let mut distinct: Vec<f64> = tenors.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::RankDeficientDesign(format!(
            "Nelson-Siegel needs at least 3 distinct tenors, got {}",
            distinct.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty decay grid".into()));
    }
    for (t, y) in yields.iter().enumerate() {
        if y.len() != tenors.len() {
            return Err(dims(format!("yield row {t} has {} entries for {} tenors", y.len(), tenors.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("yield row {t}")));
        }
    }

    let evaluate = |&lambda: &f64| -> Result<Option<Candidate>> {
        let design = ns_design(tenors, lambda)?;
        let svd = design.clone().svd(true, true);
        let top = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * top {
            return Ok(None);
        }
        let projector = svd.pseudo_inverse(0.0).map_err(|e| Error::SingularSystem(e.to_string()))?;
        let sse = yields
            .iter()
            .map(|y| (y - &design * (&projector * y)).norm_squared())
            .sum();
        Ok(Some(Candidate { lambda, design, projector, sse }))
    };

    #[cfg(feature = "parallel")]
    let candidates: Vec<Result<Option<Candidate>>> = grid.par_iter().map(evaluate).collect();
    #[cfg(not(feature = "parallel"))]
    let candidates: Vec<Result<Option<Candidate>>> = grid.iter().map(evaluate).collect();

    let mut best: Option<Candidate> = None;
    for c in candidates {
        if let Some(c) = c? {
            if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or_else(|| Error::RankDeficientDesign("design is degenerate at every grid point".into()))?;

    let mut residual_variance = DVector::zeros(tenors.len());
    let factors: Vec<Vector3<f64>> = yields
        .iter()
        .map(|y| {
            let f = &best.projector * y;
            let resid = y - &best.design * &f;
            residual_variance += resid.component_mul(&resid);
            Vector3::new(f[0], f[1], f[2])
        })
        .collect();
    if !yields.is_empty() {
        residual_variance /= yields.len() as f64;
    }
    Ok(NelsonSiegelFit {
        lambda: best.lambda,
        factors,
        design: best.design,
        residual_variance,
        total_sse: best.sse,
    })
}

/// Coefficients of the affine log-price: `ln P = offset + weights · (L, S, C)`
/// for a zero-coupon bond with `remaining` years to maturity.
pub fn bond_log_price_coefficients(remaining: f64, lambda: f64, face: f64) -> Result<(Vector3<f64>, f64)> {
    if !(remaining > 0.0) {
        return Err(Error::NonPositiveMaturity(remaining));
    }
    if !(face > 0.0) {
        return Err(Error::NonPositiveInput(format!("face value {face}")));
    }
    Ok((-remaining * ns_basis(remaining, lambda)?, face.ln()))
}

/// `face · exp(-R τ)` with the yield `R` from the factor expansion.
pub fn bond_price(factors: &Vector3<f64>, remaining: f64, lambda: f64, face: f64) -> Result<f64> {
    let (w, _) = bond_log_price_coefficients(remaining, lambda, face)?;
    Ok(face * w.dot(factors).exp())
}
