use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use condgen::gaussdlm::{DlmSpec, ObservationPanel, StepMatrices};
use condgen::linalg::spectral_radius;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0) * scale)
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0) * scale)
}

/// Random matrix rescaled to spectral radius `target`.
pub fn stable(rng: &mut ChaCha8Rng, n: usize, target: f64) -> DMatrix<f64> {
    let a = matrix(rng, n, n, 1.0);
    let rho = spectral_radius(&a);
    if rho < 1e-8 {
        a
    } else {
        a * (target / rho)
    }
}

pub fn spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let l = matrix(rng, n, n, 1.0);
    (&l * l.transpose() + DMatrix::identity(n, n) * 0.3) * scale
}

/// Random time-varying DLM with correlated noise and varying row counts.
/// With `regular`, the noise dimension is at least the row count so every
/// innovation covariance is nonsingular.
pub fn random_dlm(rng: &mut ChaCha8Rng, max_state: usize, max_len: usize, regular: bool) -> DlmSpec {
    let n = rng.random_range(1..=max_state);
    let ne = if regular { rng.random_range(3..=max_state + 3) } else { rng.random_range(1..=max_state) };
    let len = rng.random_range(1..=max_len);
    let mut steps = Vec::new();
    for _ in 0..len {
        let m = rng.random_range(0..=3);
        let rho = rng.random_range(0.0..0.95);
        steps.push(StepMatrices {
            transition: stable(rng, n, rho),
            measurement: matrix(rng, m, n, 1.0),
            state_noise: matrix(rng, n, ne, 0.8),
            measurement_noise: matrix(rng, m, ne, 0.5),
        });
    }
    let m0 = vector(rng, n, 1.0);
    let p0 = spd(rng, n, 0.5);
    DlmSpec::time_varying(steps, m0, p0).unwrap()
}

/// Observations simulated from the model itself, with ~20% of entries
/// deleted. Data drawn from the model stays inside the support of singular
/// innovation covariances.
pub fn random_obs(rng: &mut ChaCha8Rng, spec: &DlmSpec) -> ObservationPanel {
    let n = spec.n_state();
    let l = spec.initial_cov().clone().cholesky().map(|c| c.l()).unwrap();
    let mut x = spec.initial_mean() + l * normal(rng, n);
    let mut rows = Vec::new();
    for t in 0..spec.len() {
        let s = spec.step(t);
        let e = normal(rng, spec.n_noise());
        let y = &s.measurement * &x + &s.measurement_noise * &e;
        rows.push(y.iter().map(|&v| (rng.random::<f64>() > 0.2).then_some(v)).collect::<Vec<_>>());
        x = &s.transition * &x + &s.state_noise * &e;
    }
    ObservationPanel::from_options(&rows).unwrap()
}

pub fn normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(rand_distr::StandardNormal))
}
