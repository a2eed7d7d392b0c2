//! Brute-force conditional forecasts built directly from the model equations
//! for states, factors and assets, without the future DLM, view compilation
//! or the Kalman recursions.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use condgen::estimation::ThetaBundle;
use condgen::gaussdlm::GaussianBelief;
use condgen::linalg::psd_factor;
use condgen::markets::MarketSpec;
use condgen::views::{View, ViewKind};

use super::dense::Joint;
use super::random::{matrix, spd, vector};

/// What a native linear map produces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Native {
    X,
    Y,
    MuF,
    F,
    Alpha,
    Mu,
    R,
    E1,
    E2,
}

/// Joint Gaussian over `u = (x̃[0], α[0], (e'[k], e''[k], η[k], εʳ[k]) for k
/// in 0..=H)` with `η[k]` the alpha innovation and `εʳ[k]` the idiosyncratic
/// return, each with its model covariance.
pub struct NativeModel<'a> {
    pub theta: &'a ThetaBundle,
    pub psi: &'a MarketSpec,
    pub horizon: usize,
    pub prior: Joint,
    n_x: usize,
    n_a: usize,
    n_e1: usize,
    n_e2: usize,
}

impl<'a> NativeModel<'a> {
    pub fn new(theta: &'a ThetaBundle, psi: &'a MarketSpec, terminal: &GaussianBelief, horizon: usize) -> Self {
        let d = theta.dims();
        let n_a = psi.n_assets();
        let per = d.n_e1 + d.n_e2 + 2 * n_a;
        let dim = d.n_x + n_a + (horizon + 1) * per;
        let mut mean = DVector::zeros(dim);
        mean.rows_mut(0, d.n_x).copy_from(&terminal.mean);
        let mut cov = DMatrix::zeros(dim, dim);
        cov.view_mut((0, 0), (d.n_x, d.n_x)).copy_from(&terminal.cov);
        let resid0 = psi.residual_cov(0).unwrap();
        cov.view_mut((d.n_x, d.n_x), (n_a, n_a)).copy_from(&(psi.tau() * resid0));
        let phi = psi.phi();
        let constant = matches!(psi.persistence(), condgen::markets::AlphaPersistence::ConstantAlpha);
        for k in 0..=horizon {
            let o = d.n_x + n_a + k * per;
            let id = DMatrix::<f64>::identity(d.n_e1 + d.n_e2, d.n_e1 + d.n_e2);
            cov.view_mut((o, o), (d.n_e1 + d.n_e2, d.n_e1 + d.n_e2)).copy_from(&id);
            let resid = psi.residual_cov(k).unwrap();
            let eta = if constant {
                DMatrix::zeros(n_a, n_a)
            } else {
                psi.tau() * resid - psi.tau() * &phi * resid * phi.transpose()
            };
            let oe = o + d.n_e1 + d.n_e2;
            cov.view_mut((oe, oe), (n_a, n_a)).copy_from(&eta);
            cov.view_mut((oe + n_a, oe + n_a), (n_a, n_a)).copy_from(resid);
        }
        Self {
            theta,
            psi,
            horizon,
            prior: Joint { mean, cov },
            n_x: d.n_x,
            n_a,
            n_e1: d.n_e1,
            n_e2: d.n_e2,
        }
    }

    fn dim(&self) -> usize {
        self.prior.mean.len()
    }

    fn step_offset(&self, k: usize) -> usize {
        self.n_x + self.n_a + k * (self.n_e1 + self.n_e2 + 2 * self.n_a)
    }

    fn select(&self, at: usize, width: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(width, self.dim());
        m.view_mut((0, at), (width, width)).fill_with_identity();
        m
    }

    fn x_tilde(&self, k: usize) -> DMatrix<f64> {
        let a = &self.theta.a;
        let mut m = DMatrix::zeros(self.n_x, self.dim());
        m.view_mut((0, 0), (self.n_x, self.n_x)).copy_from(&a.pow(k as u32));
        for j in 0..k {
            let load = a.pow((k - 1 - j) as u32) * &self.theta.g;
            m.view_mut((0, self.step_offset(j)), (self.n_x, self.n_e1)).copy_from(&load);
        }
        m
    }

    fn alpha(&self, k: usize) -> DMatrix<f64> {
        let phi = self.psi.phi();
        let n = self.n_a;
        let mut m = DMatrix::zeros(n, self.dim());
        m.view_mut((0, self.n_x), (n, n)).copy_from(&phi.pow(k as u32));
        for j in 0..k {
            let at = self.step_offset(j) + self.n_e1 + self.n_e2;
            m.view_mut((0, at), (n, n)).copy_from(&phi.pow((k - 1 - j) as u32));
        }
        m
    }

    /// `(offset, M)` with `native[k] = offset + M u`.
    pub fn native(&self, what: Native, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let t = self.theta;
        let o = self.step_offset(k);
        let e1 = self.select(o, self.n_e1);
        let e2 = self.select(o + self.n_e1, self.n_e2);
        let er = self.select(o + self.n_e1 + self.n_e2 + self.n_a, self.n_a);
        let xt = self.x_tilde(k);
        let f_noise = &t.f_prime * &e1 + &t.f_second * &e2;
        let beta = || self.psi.beta(k).unwrap().clone();
        match what {
            Native::X => (t.x_bar.clone(), xt),
            Native::Y => (t.y_bar.clone(), &t.b * &xt + &t.h * &e1),
            Native::MuF => (t.f_bar.clone(), &t.gamma * &xt),
            Native::F => (t.f_bar.clone(), &t.gamma * &xt + f_noise),
            Native::Alpha => (DVector::zeros(self.n_a), self.alpha(k)),
            Native::Mu => (beta() * &t.f_bar, beta() * &t.gamma * &xt + self.alpha(k)),
            Native::R => (
                beta() * &t.f_bar,
                beta() * (&t.gamma * &xt + f_noise) + self.alpha(k) + er,
            ),
            Native::E1 => (DVector::zeros(self.n_e1), e1),
            Native::E2 => (DVector::zeros(self.n_e2), e2),
        }
    }

    pub fn view_native(kind: ViewKind) -> Native {
        match kind {
            ViewKind::MacroState => Native::X,
            ViewKind::MacroObservation => Native::Y,
            ViewKind::MacroShock => Native::E1,
            ViewKind::MeanFactorReturn => Native::MuF,
            ViewKind::FactorReturn => Native::F,
            ViewKind::MeanAssetReturn => Native::Mu,
        }
    }

    /// Prior conditioned on every view at once.
    pub fn condition(&self, views: &[View]) -> Joint {
        let rows: usize = views.iter().map(|v| v.selector.nrows()).sum();
        let mut m = DMatrix::zeros(rows, self.dim());
        let mut y = DVector::zeros(rows);
        let mut noise = DMatrix::zeros(rows, rows);
        let mut at = 0;
        for v in views {
            let (offset, native) = self.native(Self::view_native(v.kind), v.time as usize);
            let k = v.selector.nrows();
            m.rows_mut(at, k).copy_from(&(&v.selector * native));
            y.rows_mut(at, k).copy_from(&(&v.value - &v.selector * offset));
            noise.view_mut((at, at), (k, k)).copy_from(&v.uncertainty);
            at += k;
        }
        self.prior.condition(&m, &y, &noise)
    }

    /// Moments of `native[k]` under `joint`.
    pub fn moments(&self, joint: &Joint, what: Native, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let (offset, m) = self.native(what, k);
        let mapped = joint.map(&m);
        (offset + mapped.mean, mapped.cov)
    }

    /// One draw of `u` from the prior.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let root = psd_factor(&self.prior.cov).unwrap();
        &self.prior.mean + &root * vector_normal(rng, root.ncols())
    }

    /// Random views whose values are drawn from the prior predictive, so
    /// even exact views are mutually consistent. With `exact_only` every
    /// view has zero uncertainty.
    pub fn random_views(&self, rng: &mut ChaCha8Rng, n_views: usize, exact_only: bool) -> Vec<View> {
        use rand::Rng;
        let truth = self.draw(rng);
        let mut views = Vec::new();
        while views.len() < n_views {
            let kind = ViewKind::ALL[rng.random_range(0..ViewKind::ALL.len())];
            let native = kind.native_dim(self.theta, self.psi);
            if native == 0 {
                continue;
            }
            let time = rng.random_range(0..=self.horizon);
            let rows = rng.random_range(1..=2);
            let selector = matrix(rng, rows, native, 1.0);
            let omega = match if exact_only { 0 } else { rng.random_range(0..3) } {
                0 => DMatrix::zeros(rows, rows),
                1 => spd(rng, rows, 0.05),
                _ => {
                    let l = matrix(rng, rows, 1, 0.3);
                    &l * l.transpose()
                }
            };
            let (offset, m) = self.native(Self::view_native(kind), time);
            let mut value = &selector * (offset + m * &truth);
            let xi_root = psd_factor(&omega).unwrap();
            value += &xi_root * vector_normal(rng, xi_root.ncols());
            views.push(View::new(kind, time as i64, selector, value, omega).unwrap());
        }
        views
    }
}

fn vector_normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    condgen::rng::standard_normal_vector(rng, n)
}

/// Random parameter set with every block present and a stable transition.
pub fn random_theta(rng: &mut ChaCha8Rng) -> ThetaBundle {
    use rand::Rng;
    let n_x = rng.random_range(1..=3);
    let n_y = rng.random_range(1..=3);
    let n_f = rng.random_range(1..=3);
    let n_e1 = rng.random_range(1..=3);
    let n_e2 = rng.random_range(1..=2);
    let rho = rng.random_range(0.0..0.95);
    ThetaBundle::new(
        super::random::stable(rng, n_x, rho),
        matrix(rng, n_y, n_x, 1.0),
        matrix(rng, n_f, n_x, 0.5),
        matrix(rng, n_x, n_e1, 0.6),
        matrix(rng, n_y, n_e1, 0.3),
        matrix(rng, n_f, n_e1, 0.2),
        matrix(rng, n_f, n_e2, 0.3),
        vector(rng, n_x, 1.0),
        vector(rng, n_y, 1.0),
        vector(rng, n_f, 0.05),
    )
    .unwrap()
}

/// Random market with time-varying exposures over `0..=horizon`.
pub fn random_psi(rng: &mut ChaCha8Rng, n_f: usize, horizon: usize) -> MarketSpec {
    use condgen::markets::AlphaPersistence;
    use rand::Rng;
    let n_a = rng.random_range(0..=3);
    let betas = (0..=horizon).map(|_| matrix(rng, n_a, n_f, 1.0)).collect();
    let base = spd(rng, n_a, 0.02);
    let resid = (0..=horizon).map(|k| &base * (1.0 + 0.1 * k as f64)).collect();
    let persistence = if rng.random_bool(0.5) {
        AlphaPersistence::ConstantAlpha
    } else {
        AlphaPersistence::Diagonal(DVector::from_element(n_a, rng.random_range(0.1..0.7)))
    };
    let tau = rng.random_range(0.05..1.0);
    MarketSpec::new(betas, resid, tau, persistence).unwrap()
}

pub fn random_terminal(rng: &mut ChaCha8Rng, n_x: usize) -> GaussianBelief {
    GaussianBelief::new(vector(rng, n_x, 1.0), spd(rng, n_x, 0.3), 0, None)
}
