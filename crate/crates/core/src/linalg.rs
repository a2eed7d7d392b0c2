//! Dense linear-algebra helpers shared by the model modules.
//!
//! Everything here works on symmetric positive semidefinite matrices that may
//! be rank deficient: exact views and degenerate noise loadings are routine in
//! conditional forecasting, so factorizations are rank revealing.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dims, Error, Result};

/// Relative eigenvalue cutoff below which a symmetric matrix is treated as
/// singular in that direction.
pub const RANK_RTOL: f64 = 1e-12;

/// Eigenvalues more negative than this are reported as a PSD violation.
pub const PSD_NEG_TOL: f64 = 1e-9;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(dims(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

pub fn ensure_shape(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(dims(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_len(v: &DVector<f64>, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(dims(format!("{what} must have length {len}, got {}", v.len())));
    }
    Ok(())
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues sorted in
/// decreasing order.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrized(m.clone()))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

fn rank_cutoff(values: &DVector<f64>, scale: f64) -> f64 {
    let top = values.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    RANK_RTOL * top.max(scale)
}

/// Rectangular factor `L` with `L Lᵀ = m` and one column per numerically
/// nonzero eigenvalue. Eigenvalues in `[-PSD_NEG_TOL, 0)` are clipped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(m, "covariance")?;
    let (values, vectors) = sorted_eigen(m);
    if let Some(&lowest) = values.as_slice().last() {
        if lowest < -PSD_NEG_TOL {
            return Err(Error::NotPsd { min_eigenvalue: lowest });
        }
    }
    let cutoff = rank_cutoff(&values, 0.0);
    let rank = values.iter().filter(|&&v| v > cutoff && v > 0.0).count();
    let mut factor = DMatrix::zeros(n, rank);
    for k in 0..rank {
        let scale = values[k].sqrt();
        factor.set_column(k, &(vectors.column(k) * scale));
    }
    Ok(factor)
}

/// Moore-Penrose inverse of a symmetric PSD matrix.
#[derive(Debug, Clone)]
pub struct SymPinv {
    pub inverse: DMatrix<f64>,
    pub rank: usize,
    /// Log of the product of the retained eigenvalues.
    pub log_pdet: f64,
}

pub fn sym_pinv(m: &DMatrix<f64>) -> SymPinv {
    sym_pinv_scaled(m, 0.0)
}

/// Like [`sym_pinv`], but eigenvalues are compared against `scale` when it
/// exceeds the largest eigenvalue. Use it when `m` is a difference of much
/// larger terms and its small eigenvalues may be pure roundoff.
pub fn sym_pinv_scaled(m: &DMatrix<f64>, scale: f64) -> SymPinv {
    let n = m.nrows();
    let (values, vectors) = sorted_eigen(m);
    let cutoff = rank_cutoff(&values, scale);
    let mut inverse = DMatrix::zeros(n, n);
    let mut rank = 0;
    let mut log_pdet = 0.0;
    for k in 0..n {
        let v = values[k];
        if v > cutoff && v > 0.0 {
            let u = vectors.column(k);
            inverse += (u * u.transpose()) / v;
            rank += 1;
            log_pdet += v.ln();
        }
    }
    symmetrize(&mut inverse);
    SymPinv { inverse, rank, log_pdet }
}

/// Lower-triangular factor of a PSD matrix, computed column by column without
/// pivoting. Pivots at or below `tol` relative to the largest diagonal entry
/// produce a zero column, so singular inputs keep the original variable order.
pub fn psd_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(m, "covariance")?;
    let scale = (0..n).fold(0.0_f64, |acc, i| acc.max(m[(i, i)].abs()));
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -PSD_NEG_TOL.max(1e-9 * scale) {
            return Err(Error::NotPsd { min_eigenvalue: d });
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem(format!("{what} is not positive definite")))?;
    Ok(symmetrized(chol.inverse()))
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(dims("horizontal stack needs equal row counts"));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    Ok(out)
}

pub fn vstack(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(dims("vertical stack needs equal column counts"));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    Ok(out)
}

pub fn vstack_vec(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(*p);
        r += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_factor_reconstructs_and_reveals_rank() {
        let a = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = &a * a.transpose();
        let l = psd_factor(&m).unwrap();
        assert_eq!(l.ncols(), 1);
        assert!(max_abs(&(&l * l.transpose() - &m)) < 1e-12);

        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(psd_factor(&z).unwrap().ncols(), 0);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(psd_factor(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = DVector::from_vec(vec![3.0, 4.0]);
        let m = &a * a.transpose();
        let p = sym_pinv(&m);
        assert_eq!(p.rank, 1);
        assert!(max_abs(&(&m * &p.inverse * &m - &m)) < 1e-12);
        assert!((p.log_pdet - 25.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn semidefinite_cholesky_keeps_order() {
        // second variable is a copy of the first
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 4.0, 2.0, 4.0, 4.0, 2.0, 2.0, 2.0, 3.0]);
        let l = psd_cholesky(&m).unwrap();
        assert!(max_abs(&(&l * l.transpose() - &m)) < 1e-12);
        assert_eq!(l[(1, 1)], 0.0);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&a) - 0.5).abs() < 1e-12);
    }
}
