use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::FutureLayout;
use crate::error::{dims, Error, Result};
use crate::estimation::ThetaBundle;
use crate::linalg::{psd_factor, symmetrized};
use crate::markets::{bond_log_price_coefficients, MarketSpec};
use crate::rng::{derive_seed, standard_normal_vector, substream};

/// Reported variable groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SeriesKind {
    /// Macro states `x` (levels).
    X,
    /// Macro observables `y` (levels).
    Y,
    /// Factor returns `f`.
    F,
    /// Mean factor returns `μᶠ`.
    MuF,
    Alpha,
    /// Mean asset returns `μ`.
    Mu,
    /// Asset returns `r`.
    R,
    /// Disturbances `(e', e'', e''')`.
    Eps,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 8] = [
        SeriesKind::X,
        SeriesKind::Y,
        SeriesKind::F,
        SeriesKind::MuF,
        SeriesKind::Alpha,
        SeriesKind::Mu,
        SeriesKind::R,
        SeriesKind::Eps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::X => "x",
            SeriesKind::Y => "y",
            SeriesKind::F => "f",
            SeriesKind::MuF => "mu_f",
            SeriesKind::Alpha => "alpha",
            SeriesKind::Mu => "mu",
            SeriesKind::R => "r",
            SeriesKind::Eps => "eps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeriesId {
    Core(SeriesKind),
    Functional(String),
}

impl SeriesId {
    pub fn name(&self) -> &str {
        match self {
            SeriesId::Core(k) => k.name(),
            SeriesId::Functional(n) => n,
        }
    }
}

/// A scalar `c[k] + w[k] · s[k]` of one core series per step, optionally
/// reported on the exponential scale (log-normal bands).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub name: String,
    pub base: SeriesKind,
    /// Per-step weights; a single entry is reused at every step.
    pub weights: Vec<DVector<f64>>,
    pub offsets: Vec<f64>,
    pub exponentiate: bool,
}

impl LinearFunctional {
    pub fn constant(name: impl Into<String>, base: SeriesKind, weights: DVector<f64>, offset: f64, exponentiate: bool) -> Self {
        Self { name: name.into(), base, weights: vec![weights], offsets: vec![offset], exponentiate }
    }

    /// Log-price of a zero-coupon bond maturing `maturity` years after the
    /// present, priced from the Nelson-Siegel factors at `indices`
    /// (level, slope, curvature) of `f`. Each horizon step lasts
    /// `step_years`; the bond must not mature within the horizon.
    #[allow(clippy::too_many_arguments)]
    pub fn zero_coupon_bond(
        name: impl Into<String>,
        n_factors: usize,
        indices: [usize; 3],
        lambda: f64,
        maturity: f64,
        face: f64,
        step_years: f64,
        horizon: usize,
    ) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= n_factors) {
            return Err(dims(format!("factor index {i} out of range for {n_factors} factors")));
        }
        let mut weights = Vec::with_capacity(horizon + 1);
        let mut offsets = Vec::with_capacity(horizon + 1);
        for k in 0..=horizon {
            let (w, c) = bond_log_price_coefficients(maturity - k as f64 * step_years, lambda, face)?;
            let mut full = DVector::zeros(n_factors);
            for (j, &i) in indices.iter().enumerate() {
                full[i] += w[j];
            }
            weights.push(full);
            offsets.push(c);
        }
        Ok(Self { name: name.into(), base: SeriesKind::F, weights, offsets, exponentiate: true })
    }

    fn at(&self, k: usize) -> (&DVector<f64>, f64) {
        let w = &self.weights[k.min(self.weights.len() - 1)];
        let c = self.offsets[k.min(self.offsets.len() - 1)];
        (w, c)
    }

    fn check(&self, horizon: usize, base_dim: usize) -> Result<()> {
        if self.weights.is_empty() || self.offsets.is_empty() {
            return Err(Error::InvalidArgument(format!("functional {} has no weights", self.name)));
        }
        for (n, what) in [(self.weights.len(), "weights"), (self.offsets.len(), "offsets")] {
            if n != 1 && n != horizon + 1 {
                return Err(dims(format!("functional {} has {n} {what} for {} steps", self.name, horizon + 1)));
            }
        }
        if let Some(w) = self.weights.iter().find(|w| w.len() != base_dim) {
            return Err(dims(format!(
                "functional {} has {} weights for a series of width {base_dim}",
                self.name,
                w.len()
            )));
        }
        Ok(())
    }
}

/// Per-step forecast of one series.
#[derive(Debug, Clone)]
pub struct SeriesForecast {
    pub id: SeriesId,
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    /// Simulated values `[path][step]` in simulation mode.
    pub paths: Option<Vec<Vec<DVector<f64>>>>,
    /// Moments are of the logarithm; bands are reported exponentiated.
    pub exponentiate: bool,
}

impl SeriesForecast {
    pub fn width(&self) -> usize {
        self.mean.first().map_or(0, |m| m.len())
    }

    /// Per-step means on the reporting scale: log-normal means
    /// `exp(m + v/2)` for exponentiated series.
    pub fn level_mean(&self) -> Vec<DVector<f64>> {
        if !self.exponentiate {
            return self.mean.clone();
        }
        self.mean
            .iter()
            .zip(&self.cov)
            .map(|(m, c)| DVector::from_fn(m.len(), |i, _| (m[i] + 0.5 * c[(i, i)]).exp()))
            .collect()
    }

    /// Quantile bands per level, indexed `[level][step]`. Gaussian marginals
    /// are used unless paths are available, in which case bands are
    /// empirical quantiles.
    pub fn bands(&self, levels: &[f64]) -> Result<Vec<Vec<DVector<f64>>>> {
        check_levels(levels)?;
        let std_normal = Normal::standard();
        levels
            .iter()
            .map(|&q| {
                (0..self.mean.len())
                    .map(|k| {
                        let band = match &self.paths {
                            Some(paths) => empirical_quantile(paths, k, self.width(), q),
                            None => {
                                let z = std_normal.inverse_cdf(q);
                                let m = &self.mean[k];
                                DVector::from_fn(m.len(), |i, _| m[i] + z * self.cov[k][(i, i)].max(0.0).sqrt())
                            }
                        };
                        if self.exponentiate {
                            band.map(f64::exp)
                        } else {
                            band
                        }
                    })
                    .collect()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(Ok)
            .collect()
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::InvalidArgument("band levels must lie in (0, 1)".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("band levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Type-7 (linear interpolation) sample quantile.
fn empirical_quantile(paths: &[Vec<DVector<f64>>], k: usize, width: usize, q: f64) -> DVector<f64> {
    let n = paths.len();
    DVector::from_fn(width, |i, _| {
        let mut v: Vec<f64> = paths.iter().map(|p| p[k][i]).collect();
        v.sort_by(f64::total_cmp);
        let h = (n - 1) as f64 * q;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    })
}

/// Level offsets used to turn deviation-form variables into levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOffsets {
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub f_bar: DVector<f64>,
}

/// Forecast of every reported series over horizon steps `0..=H`.
#[derive(Debug, Clone)]
pub struct ForecastPanel {
    pub horizon: usize,
    pub layout: FutureLayout,
    pub offsets: LevelOffsets,
    pub series: Vec<SeriesForecast>,
    /// Moments of `z = (x̃, α, e', e'', e''', e'''')` per step for a single
    /// parameter set.
    pub joint: Option<Vec<(DVector<f64>, DMatrix<f64>)>>,
    pub n_paths: Option<usize>,
}

impl ForecastPanel {
    pub fn get(&self, id: &SeriesId) -> Option<&SeriesForecast> {
        self.series.iter().find(|s| &s.id == id)
    }

    pub fn core(&self, kind: SeriesKind) -> &SeriesForecast {
        self.get(&SeriesId::Core(kind)).expect("core series are always present")
    }

    pub fn functional(&self, name: &str) -> Option<&SeriesForecast> {
        self.get(&SeriesId::Functional(name.to_string()))
    }
}

/// State-level posterior that series are derived from.
#[derive(Debug, Clone)]
pub enum StatePosterior {
    /// Mean and covariance of `z` per step.
    Moments(Vec<(DVector<f64>, DMatrix<f64>)>),
    /// Draws of `z`, `[path][step]`.
    Paths(Vec<Vec<DVector<f64>>>),
}

/// Affine map `s = offset + M z` (plus independent noise `extra`) defining a
/// core series at one step.
pub(crate) struct SeriesMap {
    pub offset: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub extra: Option<DMatrix<f64>>,
}

pub(crate) fn series_map(kind: SeriesKind, theta: &ThetaBundle, psi: &MarketSpec, layout: &FutureLayout, k: usize) -> Result<SeriesMap> {
    let d = theta.dims();
    let n_a = layout.n_assets;
    let nz = layout.n_joint();
    let (xo, ao, no) = (layout.x_offset(), layout.alpha_offset(), layout.noise_offset());
    let e1 = no + layout.noise.macro_offset();
    let e2 = no + layout.noise.factor_offset();
    let width = match kind {
        SeriesKind::X => d.n_x,
        SeriesKind::Y => d.n_y,
        SeriesKind::F | SeriesKind::MuF => d.n_f,
        SeriesKind::Alpha | SeriesKind::Mu | SeriesKind::R => n_a,
        SeriesKind::Eps => layout.noise.total(),
    };
    let mut m = DMatrix::zeros(width, nz);
    let mut offset = DVector::zeros(width);
    let mut extra = None;
    let beta = || psi.beta(k).ok_or(Error::MissingBeta(k));
    match kind {
        SeriesKind::X => {
            offset.copy_from(&theta.x_bar);
            m.view_mut((0, xo), (d.n_x, d.n_x)).fill_with_identity();
        }
        SeriesKind::Y => {
            offset.copy_from(&theta.y_bar);
            m.view_mut((0, xo), (d.n_y, d.n_x)).copy_from(&theta.b);
            m.view_mut((0, e1), (d.n_y, d.n_e1)).copy_from(&theta.h);
        }
        SeriesKind::MuF | SeriesKind::F => {
            offset.copy_from(&theta.f_bar);
            m.view_mut((0, xo), (d.n_f, d.n_x)).copy_from(&theta.gamma);
            if kind == SeriesKind::F {
                m.view_mut((0, e1), (d.n_f, d.n_e1)).copy_from(&theta.f_prime);
                m.view_mut((0, e2), (d.n_f, d.n_e2)).copy_from(&theta.f_second);
            }
        }
        SeriesKind::Alpha => {
            m.view_mut((0, ao), (n_a, n_a)).fill_with_identity();
        }
        SeriesKind::Mu | SeriesKind::R => {
            let beta = beta()?;
            offset = beta * &theta.f_bar;
            m.view_mut((0, xo), (n_a, d.n_x)).copy_from(&(beta * &theta.gamma));
            m.view_mut((0, ao), (n_a, n_a)).fill_with_identity();
            if kind == SeriesKind::R {
                m.view_mut((0, e1), (n_a, d.n_e1)).copy_from(&(beta * &theta.f_prime));
                m.view_mut((0, e2), (n_a, d.n_e2)).copy_from(&(beta * &theta.f_second));
                extra = Some(psi.residual_cov(k).ok_or(Error::MissingMarketSpec(k))?.clone());
            }
        }
        SeriesKind::Eps => {
            m.view_mut((0, no), (width, width)).fill_with_identity();
        }
    }
    Ok(SeriesMap { offset, matrix: m, extra })
}

fn base_width(kind: SeriesKind, theta: &ThetaBundle, layout: &FutureLayout) -> usize {
    let d = theta.dims();
    match kind {
        SeriesKind::X => d.n_x,
        SeriesKind::Y => d.n_y,
        SeriesKind::F | SeriesKind::MuF => d.n_f,
        SeriesKind::Alpha | SeriesKind::Mu | SeriesKind::R => layout.n_assets,
        SeriesKind::Eps => layout.noise.total(),
    }
}

/// Maps the state-level posterior to every core series and each functional.
///
/// In moment mode, asset returns add `Σʳ[k]` to their covariance. In path
/// mode, each path receives its own idiosyncratic draw from a stream derived
/// from `seed`, and reported moments are sample moments.
pub fn derive_series(
    state: &StatePosterior,
    theta: &ThetaBundle,
    psi: &MarketSpec,
    layout: &FutureLayout,
    functionals: &[LinearFunctional],
    seed: u64,
) -> Result<ForecastPanel> {
    let steps = match state {
        StatePosterior::Moments(m) => m.len(),
        StatePosterior::Paths(p) => p.first().map_or(0, |p| p.len()),
    };
    if steps == 0 {
        return Err(Error::MissingJointCovariance("no steps to derive".into()));
    }
    let horizon = steps - 1;
    let nz = layout.n_joint();
    match state {
        StatePosterior::Moments(m) => {
            if let Some((mean, cov)) = m.iter().find(|(mean, cov)| mean.len() != nz || cov.shape() != (nz, nz)) {
                return Err(Error::MissingJointCovariance(format!(
                    "expected joint moments of width {nz}, got mean {} and covariance {:?}",
                    mean.len(),
                    cov.shape()
                )));
            }
        }
        StatePosterior::Paths(p) => {
            if p.iter().any(|path| path.len() != steps || path.iter().any(|z| z.len() != nz)) {
                return Err(Error::MissingJointCovariance(format!("paths must hold {steps} draws of width {nz}")));
            }
        }
    }
    for f in functionals {
        f.check(horizon, base_width(f.base, theta, layout))?;
    }

    let maps: Vec<Vec<SeriesMap>> = SeriesKind::ALL
        .iter()
        .map(|&kind| (0..steps).map(|k| series_map(kind, theta, psi, layout, k)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let mut series = Vec::new();
    match state {
        StatePosterior::Moments(moments) => {
            for (kind, kmaps) in SeriesKind::ALL.iter().zip(&maps) {
                let (mean, cov) = moments
                    .iter()
                    .zip(kmaps)
                    .map(|((zm, zc), map)| affine_moments(map, zm, zc, None))
                    .unzip();
                series.push(SeriesForecast { id: SeriesId::Core(*kind), mean, cov, paths: None, exponentiate: false });
            }
            for f in functionals {
                let kmaps = &maps[kind_index(f.base)];
                let (mean, cov) = moments
                    .iter()
                    .zip(kmaps)
                    .enumerate()
                    .map(|(k, ((zm, zc), map))| affine_moments(map, zm, zc, Some(f.at(k))))
                    .unzip();
                series.push(SeriesForecast {
                    id: SeriesId::Functional(f.name.clone()),
                    mean,
                    cov,
                    paths: None,
                    exponentiate: f.exponentiate,
                });
            }
        }
        StatePosterior::Paths(paths) => {
            let r_roots: Vec<DMatrix<f64>> = (0..steps)
                .map(|k| psd_factor(psi.residual_cov(k).ok_or(Error::MissingMarketSpec(k))?))
                .collect::<Result<_>>()?;
            let idio_seed = derive_seed(seed, 0x1d10);
            let mut core_paths: Vec<Vec<Vec<DVector<f64>>>> = vec![Vec::with_capacity(paths.len()); SeriesKind::ALL.len()];
            for (i, path) in paths.iter().enumerate() {
                let mut rng = substream(idio_seed, i as u64);
                for (s, kmaps) in maps.iter().enumerate() {
                    let mut out = Vec::with_capacity(steps);
                    for (k, (z, map)) in path.iter().zip(kmaps).enumerate() {
                        let mut v = &map.offset + &map.matrix * z;
                        if map.extra.is_some() {
                            let root = &r_roots[k];
                            v += root * standard_normal_vector(&mut rng, root.ncols());
                        }
                        out.push(v);
                    }
                    core_paths[s].push(out);
                }
            }
            let mut functional_series = Vec::new();
            for f in functionals {
                let base = &core_paths[kind_index(f.base)];
                let fpaths: Vec<Vec<DVector<f64>>> = base
                    .iter()
                    .map(|p| {
                        p.iter()
                            .enumerate()
                            .map(|(k, s)| {
                                let (w, c) = f.at(k);
                                DVector::from_element(1, c + w.dot(s))
                            })
                            .collect()
                    })
                    .collect();
                functional_series.push((SeriesId::Functional(f.name.clone()), fpaths, f.exponentiate));
            }
            for (kind, p) in SeriesKind::ALL.iter().zip(core_paths) {
                series.push(from_paths(SeriesId::Core(*kind), p, false));
            }
            for (id, p, e) in functional_series {
                series.push(from_paths(id, p, e));
            }
        }
    }
    Ok(ForecastPanel {
        horizon,
        layout: *layout,
        offsets: LevelOffsets {
            x_bar: theta.x_bar.clone(),
            y_bar: theta.y_bar.clone(),
            f_bar: theta.f_bar.clone(),
        },
        series,
        joint: match state {
            StatePosterior::Moments(m) => Some(m.clone()),
            StatePosterior::Paths(_) => None,
        },
        n_paths: match state {
            StatePosterior::Moments(_) => None,
            StatePosterior::Paths(p) => Some(p.len()),
        },
    })
}

fn kind_index(kind: SeriesKind) -> usize {
    SeriesKind::ALL.iter().position(|&k| k == kind).expect("listed")
}

fn affine_moments(
    map: &SeriesMap,
    zm: &DVector<f64>,
    zc: &DMatrix<f64>,
    functional: Option<(&DVector<f64>, f64)>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mean = &map.offset + &map.matrix * zm;
    let mut cov = &map.matrix * zc * map.matrix.transpose();
    if let Some(extra) = &map.extra {
        cov += extra;
    }
    match functional {
        None => (mean, symmetrized(cov)),
        Some((w, c)) => (
            DVector::from_element(1, c + w.dot(&mean)),
            DMatrix::from_element(1, 1, (w.transpose() * cov * w)[(0, 0)]),
        ),
    }
}

pub(crate) fn from_paths(id: SeriesId, paths: Vec<Vec<DVector<f64>>>, exponentiate: bool) -> SeriesForecast {
    let steps = paths.first().map_or(0, |p| p.len());
    let (mean, cov) = (0..steps).map(|k| sample_moments(paths.iter().map(|p| &p[k]))).unzip();
    SeriesForecast { id, mean, cov, paths: Some(paths), exponentiate }
}

/// Sample mean and covariance (divisor `n - 1`; zero for a single draw).
pub(crate) fn sample_moments<'a>(draws: impl Iterator<Item = &'a DVector<f64>> + Clone) -> (DVector<f64>, DMatrix<f64>) {
    let n = draws.clone().count();
    let width = draws.clone().next().map_or(0, |d| d.len());
    let mut mean = DVector::zeros(width);
    for d in draws.clone() {
        mean += d;
    }
    mean /= n.max(1) as f64;
    let mut cov = DMatrix::zeros(width, width);
    if n > 1 {
        for d in draws {
            let c = d - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
    }
    (mean, symmetrized(cov))
}
