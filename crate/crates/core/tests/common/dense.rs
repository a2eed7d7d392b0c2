//! Brute-force Gaussian conditioning on the fully unrolled joint normal.
//! Independent of the recursive filter/smoother code paths.

use nalgebra::{DMatrix, DVector};

use condgen::gaussdlm::{DlmSpec, ObservationPanel};

/// A Gaussian vector `u ~ N(mean, cov)`.
#[derive(Clone, Debug)]
pub struct Joint {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Pseudo-inverse of a symmetric PSD matrix from its eigendecomposition.
/// Eigenvalues below `1e-12` of the largest are treated as zero.
pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut out = DMatrix::zeros(n, n);
    for (k, &v) in eig.eigenvalues.iter().enumerate() {
        if v > 1e-12 * top {
            let q = eig.eigenvectors.column(k);
            out += q * q.transpose() / v;
        }
    }
    out
}

impl Joint {
    /// Conditions on `obs = M u + noise`, `noise ~ N(0, noise_cov)`.
    pub fn condition(&self, m: &DMatrix<f64>, obs: &DVector<f64>, noise_cov: &DMatrix<f64>) -> Joint {
        if m.nrows() == 0 {
            return self.clone();
        }
        let s = m * &self.cov * m.transpose() + noise_cov;
        let s_inv = psd_pinv(&s);
        let k = &self.cov * m.transpose() * &s_inv;
        let mean = &self.mean + &k * (obs - m * &self.mean);
        let cov = &self.cov - &k * m * &self.cov;
        Joint { mean, cov: 0.5 * (&cov + cov.transpose()) }
    }

    pub fn map(&self, m: &DMatrix<f64>) -> Joint {
        Joint {
            mean: m * &self.mean,
            cov: m * &self.cov * m.transpose(),
        }
    }

    /// Log-density of `obs = M u` (nonsingular case).
    pub fn log_density(&self, m: &DMatrix<f64>, obs: &DVector<f64>) -> f64 {
        let k = m.nrows();
        if k == 0 {
            return 0.0;
        }
        let s = m * &self.cov * m.transpose();
        let d = obs - m * &self.mean;
        let lu = s.clone().lu();
        let det = lu.determinant();
        let quad = (d.transpose() * lu.solve(&d).unwrap())[(0, 0)];
        -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
    }
}

/// The DLM rewritten as linear maps from `u = (x[0], e[0], ..., e[n-1])`.
pub struct Unrolled {
    pub base: Joint,
    pub state_maps: Vec<DMatrix<f64>>,
    pub dist_maps: Vec<DMatrix<f64>>,
    pub obs_maps: Vec<DMatrix<f64>>,
}

pub fn unroll(spec: &DlmSpec) -> Unrolled {
    let n = spec.n_state();
    let ne = spec.n_noise();
    let len = spec.len();
    let dim = n + ne * len;
    let mut mean = DVector::zeros(dim);
    mean.rows_mut(0, n).copy_from(spec.initial_mean());
    let mut cov = DMatrix::identity(dim, dim);
    cov.view_mut((0, 0), (n, n)).copy_from(spec.initial_cov());

    let mut state_maps = Vec::new();
    let mut dist_maps = Vec::new();
    let mut obs_maps = Vec::new();
    let mut x = DMatrix::zeros(n, dim);
    x.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    for t in 0..len {
        let mut e = DMatrix::zeros(ne, dim);
        e.view_mut((0, n + ne * t), (ne, ne)).copy_from(&DMatrix::identity(ne, ne));
        let s = spec.step(t);
        obs_maps.push(&s.measurement * &x + &s.measurement_noise * &e);
        let next = &s.transition * &x + &s.state_noise * &e;
        state_maps.push(x);
        dist_maps.push(e);
        x = next;
    }
    Unrolled { base: Joint { mean, cov }, state_maps, dist_maps, obs_maps }
}

impl Unrolled {
    /// Observation map and values for observed entries of steps `0..upto`.
    pub fn observed_system(&self, obs: &ObservationPanel, upto: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rows: Vec<DMatrix<f64>> = Vec::new();
        let mut vals = Vec::new();
        for t in 0..upto {
            for i in obs.observed_indices(t) {
                rows.push(self.obs_maps[t].rows(i, 1).into_owned());
                vals.push(obs.row(t)[i]);
            }
        }
        let dim = self.base.mean.len();
        let mut m = DMatrix::zeros(rows.len(), dim);
        for (k, r) in rows.iter().enumerate() {
            m.set_row(k, &r.row(0));
        }
        (m, DVector::from_vec(vals))
    }

    /// False when some prefix of the observations leaves a direction whose
    /// variance sits between `1e-12` and `1e-8` of the unconditional scale,
    /// either in the observed system or in a conditional state. Such a
    /// direction survives the rank cutoff but is only resolved to about
    /// `1e-16 / ratio` in double precision, so no two implementations can be
    /// expected to agree to `1e-8` there.
    pub fn well_posed(&self, obs: &ObservationPanel) -> bool {
        let graded = |cov: DMatrix<f64>, top: f64| {
            cov.symmetric_eigenvalues().iter().all(|&v| v <= 1e-12 * top || v > 1e-8 * top)
        };
        let len = self.state_maps.len();
        (1..=len).all(|upto| {
            let (m, _) = self.observed_system(obs, upto);
            if m.nrows() == 0 {
                return true;
            }
            let s = &m * &self.base.cov * m.transpose();
            let top = s.symmetric_eigenvalues().iter().fold(0.0_f64, |a, &b| a.max(b));
            let post = self.posterior(obs, upto);
            graded(s, top)
                && self.state_maps.iter().all(|x| {
                    let scale = self.base.map(x).cov.symmetric_eigenvalues().iter().fold(0.0_f64, |a, &b| a.max(b));
                    graded(post.map(x).cov, scale)
                })
        })
    }

    pub fn posterior(&self, obs: &ObservationPanel, upto: usize) -> Joint {
        let (m, y) = self.observed_system(obs, upto);
        let k = m.nrows();
        self.base.condition(&m, &y, &DMatrix::zeros(k, k))
    }
}
