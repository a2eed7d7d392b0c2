use nalgebra::{DMatrix, DVector};

use super::GaussianBelief;
use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, ensure_square, max_abs, spectral_radius, symmetrize};

const STABILITY_MARGIN: f64 = 1e-9;
/// Up to this state dimension the Kronecker system is solved directly.
const KRONECKER_MAX_DIM: usize = 12;

/// Solves `A P Aᵀ - P + Q = 0` for stable `A`.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(a, "transition")?;
    ensure_shape(q, n, n, "Lyapunov right-hand side")?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let rho = spectral_radius(a);
    if !rho.is_finite() || rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NonStationary { spectral_radius: rho });
    }
    let mut p = if n <= KRONECKER_MAX_DIM { kronecker_solve(a, q)? } else { doubling(a, q) };
    symmetrize(&mut p);
    Ok(p)
}

fn kronecker_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    // vec(A P Aᵀ) = (A ⊗ A) vec(P) with column-major vec
    let system = DMatrix::identity(n * n, n * n) - a.kronecker(a);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("Lyapunov Kronecker system".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Smith doubling: P = sum_k A^k Q (A^k)ᵀ, summed in 2^j blocks.
fn doubling(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..128 {
        let increment = &ak * &p * ak.transpose();
        p += &increment;
        ak = &ak * &ak;
        if max_abs(&increment) <= 1e-18 * (1.0 + max_abs(&p)) || max_abs(&ak) < 1e-300 {
            break;
        }
    }
    p
}

/// Unconditional distribution of a stable zero-mean state process
/// `x[t+1] = A x[t] + G e[t]`.
pub fn stationary_init(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<GaussianBelief> {
    let n = ensure_square(a, "transition")?;
    if g.nrows() != n {
        return Err(crate::error::dims("state noise loading rows must match the state dimension"));
    }
    let cov = solve_discrete_lyapunov(a, &(g * g.transpose()))?;
    Ok(GaussianBelief::new(DVector::zeros(n), cov, 0, None))
}
