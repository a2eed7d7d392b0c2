//! Joint estimation of a fully observed VAR(p) together with the factor link.

use nalgebra::{DMatrix, DVector};

use super::ThetaBundle;
use crate::error::{dims, Error, Result};
use crate::linalg::{psd_cholesky, symmetrized};

/// Companion matrix of `y[t+1] = Σ_i A_i y[t+1-i] + ...`: lag coefficients
/// across the top block row and identities on the block sub-diagonal.
pub fn companion_form(lags: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let p = lags.len();
    let n = lags.first().map_or(0, |a| a.nrows());
    let mut out = DMatrix::zeros(n * p, n * p);
    for (i, a) in lags.iter().enumerate() {
        if a.shape() != (n, n) {
            return Err(dims(format!("lag {} coefficient is {:?}, expected {n}x{n}", i + 1, a.shape())));
        }
        out.view_mut((0, i * n), (n, n)).copy_from(a);
    }
    for i in 1..p {
        out.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
    }
    Ok(out)
}

/// Estimates a VAR(p) on `y` and regresses `f` on the same state.
///
/// The state is `x[t] = (y[t], ..., y[t-p+1])`. Each row pairs the macro
/// response `y[t+1]` with the factor response `f[t]`, both on `[1, x[t]]`;
/// equation-by-equation OLS is the SUR estimator because the regressors are
/// shared. The joint residual covariance, macro block first, is factored as
/// `[[G₀, 0], [F', F'']]` with a lower-triangular factor, so `F'` carries
/// the factor shocks' correlation with macro shocks.
///
/// `f` may be empty for a macro-only fit; otherwise it must align with `y`.
pub fn estimate_var_sur(y: &[DVector<f64>], f: &[DVector<f64>], p: usize) -> Result<ThetaBundle> {
    if p == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    let t_len = y.len();
    let n_y = y.first().map_or(0, |v| v.len());
    let n_f = f.first().map_or(0, |v| v.len());
    if !f.is_empty() && f.len() != t_len {
        return Err(dims(format!("{} macro rows but {} factor rows", t_len, f.len())));
    }
    if y.iter().any(|v| v.len() != n_y) || f.iter().any(|v| v.len() != n_f) {
        return Err(dims("ragged input rows"));
    }
    if y.iter().chain(f).any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteInput("VAR data must be fully observed".into()));
    }
    let k = 1 + n_y * p;
    let required = k + p;
    if t_len <= required {
        return Err(Error::InsufficientData { required, available: t_len });
    }
    let rows = t_len - p;
    let n_resp = n_y + n_f;
    let mut x = DMatrix::zeros(rows, k);
    let mut resp = DMatrix::zeros(rows, n_resp);
    for (r, t) in ((p - 1)..(t_len - 1)).enumerate() {
        x[(r, 0)] = 1.0;
        for lag in 0..p {
            x.view_mut((r, 1 + lag * n_y), (1, n_y)).copy_from(&y[t - lag].transpose());
        }
        resp.view_mut((r, 0), (1, n_y)).copy_from(&y[t + 1].transpose());
        if n_f > 0 {
            resp.view_mut((r, n_y), (1, n_f)).copy_from(&f[t].transpose());
        }
    }

    let svd = x.clone().svd(true, true);
    let top = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * top).count();
    if rank < k {
        return Err(Error::RankDeficientDesign(format!("VAR design has rank {rank} of {k}")));
    }
    let coef = svd.solve(&resp, 0.0).map_err(|e| Error::SingularSystem(e.to_string()))?;
    let resid = &resp - &x * &coef;
    let resid_cov = symmetrized(resid.transpose() * &resid / (rows - k) as f64);

    let intercept_y = DVector::from_iterator(n_y, coef.row(0).iter().take(n_y).copied());
    let lags: Vec<DMatrix<f64>> =
        (0..p).map(|lag| coef.view((1 + lag * n_y, 0), (n_y, n_y)).transpose()).collect();
    let a = companion_form(&lags)?;
    let lag_sum = lags.iter().fold(DMatrix::zeros(n_y, n_y), |acc, l| acc + l);
    let y_mean = (DMatrix::identity(n_y, n_y) - lag_sum)
        .lu()
        .solve(&intercept_y)
        .ok_or_else(|| Error::SingularSystem("VAR has a unit root; steady state undefined".into()))?;
    let x_bar = DVector::from_iterator(n_y * p, (0..p).flat_map(|_| y_mean.iter().copied()));

    let gamma = coef.view((1, n_y), (n_y * p, n_f)).transpose();
    let f_bar = DVector::from_iterator(n_f, coef.row(0).iter().skip(n_y).copied()) + &gamma * &x_bar;

    let factor = psd_cholesky(&resid_cov)?;
    let mut g = DMatrix::zeros(n_y * p, n_y);
    g.view_mut((0, 0), (n_y, n_y)).copy_from(&factor.view((0, 0), (n_y, n_y)));
    let f_prime = factor.view((n_y, 0), (n_f, n_y)).into_owned();
    let f_second = factor.view((n_y, n_y), (n_f, n_f)).into_owned();

    let mut b = DMatrix::zeros(n_y, n_y * p);
    b.view_mut((0, 0), (n_y, n_y)).fill_with_identity();
    ThetaBundle::new(a, b, gamma, g, DMatrix::zeros(n_y, n_y), f_prime, f_second, x_bar, y_mean, f_bar)
}
