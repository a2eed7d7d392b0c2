//! Forward-looking views and their compilation into the common form
//!
//! ```text
//! ṽ[t] = P[t] α[t] + Q[t] x̃[t] + R[t] e[t] + ξ[t],    ξ[t] ~ N(0, Ω[t])
//! ```
//!
//! where `e[t] = (e'[t], e''[t], e'''[t])` stacks the macro, factor-only and
//! alpha disturbances in that order (see [`NoiseLayout`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::estimation::ThetaBundle;
use crate::linalg::{block_diag, ensure_len, ensure_shape, min_eigenvalue, psd_factor, symmetrized, vstack, vstack_vec, PSD_NEG_TOL};
use crate::markets::MarketSpec;

/// What a view's selector multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewKind {
    /// Latent macro states `x` (levels).
    MacroState,
    /// Macro observables `y` (levels).
    MacroObservation,
    /// Macro shocks `e'`.
    MacroShock,
    /// Mean factor returns `μᶠ`.
    MeanFactorReturn,
    /// Realized factor returns `f`.
    FactorReturn,
    /// Mean asset returns `μ`.
    MeanAssetReturn,
}

impl ViewKind {
    pub const ALL: [ViewKind; 6] = [
        ViewKind::MacroState,
        ViewKind::MacroObservation,
        ViewKind::MacroShock,
        ViewKind::MeanFactorReturn,
        ViewKind::FactorReturn,
        ViewKind::MeanAssetReturn,
    ];

    /// Length of the native vector the selector acts on.
    pub fn native_dim(self, theta: &ThetaBundle, psi: &MarketSpec) -> usize {
        let d = theta.dims();
        match self {
            ViewKind::MacroState => d.n_x,
            ViewKind::MacroObservation => d.n_y,
            ViewKind::MacroShock => d.n_e1,
            ViewKind::MeanFactorReturn | ViewKind::FactorReturn => d.n_f,
            ViewKind::MeanAssetReturn => psi.n_assets(),
        }
    }
}

/// `value = selector · native[t] + ξ`, `ξ ~ N(0, uncertainty)`, at horizon
/// step `time` (0 is the present).
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub kind: ViewKind,
    pub time: i64,
    pub selector: DMatrix<f64>,
    pub value: DVector<f64>,
    pub uncertainty: DMatrix<f64>,
}

impl View {
    pub fn new(kind: ViewKind, time: i64, selector: DMatrix<f64>, value: DVector<f64>, uncertainty: DMatrix<f64>) -> Result<Self> {
        let rows = selector.nrows();
        ensure_len(&value, rows, "view value")?;
        ensure_shape(&uncertainty, rows, rows, "view uncertainty")?;
        let uncertainty = symmetrized(uncertainty);
        let lowest = min_eigenvalue(&uncertainty);
        if lowest < -PSD_NEG_TOL {
            return Err(Error::NotPsd { min_eigenvalue: lowest });
        }
        Ok(Self { kind, time, selector, value, uncertainty })
    }

    /// Exact view on single entry `index` of the native vector.
    pub fn exact(kind: ViewKind, time: i64, native_dim: usize, index: usize, value: f64) -> Result<Self> {
        Self::with_stdev(kind, time, native_dim, index, value, 0.0)
    }

    /// View on single entry `index` with standard deviation `stdev`.
    pub fn with_stdev(kind: ViewKind, time: i64, native_dim: usize, index: usize, value: f64, stdev: f64) -> Result<Self> {
        if index >= native_dim {
            return Err(dims(format!("selector index {index} out of range for dimension {native_dim}")));
        }
        let mut selector = DMatrix::zeros(1, native_dim);
        selector[(0, index)] = 1.0;
        Self::new(kind, time, selector, DVector::from_element(1, value), DMatrix::from_element(1, 1, stdev * stdev))
    }
}

/// Column layout of the disturbance vector `e = (e', e'', e''')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseLayout {
    pub n_e1: usize,
    pub n_e2: usize,
    pub n_e3: usize,
}

impl NoiseLayout {
    pub fn of(theta: &ThetaBundle, psi: &MarketSpec) -> Self {
        let d = theta.dims();
        Self { n_e1: d.n_e1, n_e2: d.n_e2, n_e3: psi.n_assets() }
    }

    pub fn total(&self) -> usize {
        self.n_e1 + self.n_e2 + self.n_e3
    }

    pub fn macro_offset(&self) -> usize {
        0
    }

    pub fn factor_offset(&self) -> usize {
        self.n_e1
    }

    pub fn alpha_offset(&self) -> usize {
        self.n_e1 + self.n_e2
    }
}

/// Compiled views at one horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBlock {
    pub time: usize,
    /// rows × n_assets, loads on `α`.
    pub p: DMatrix<f64>,
    /// rows × n_x, loads on `x̃`.
    pub q: DMatrix<f64>,
    /// rows × `NoiseLayout::total`, loads on `e`.
    pub r: DMatrix<f64>,
    pub value: DVector<f64>,
    pub omega: DMatrix<f64>,
}

impl ViewBlock {
    /// A block with no rows.
    pub fn empty(time: usize, n_assets: usize, n_x: usize, n_noise: usize) -> Self {
        Self {
            time,
            p: DMatrix::zeros(0, n_assets),
            q: DMatrix::zeros(0, n_x),
            r: DMatrix::zeros(0, n_noise),
            value: DVector::zeros(0),
            omega: DMatrix::zeros(0, 0),
        }
    }

    pub fn rows(&self) -> usize {
        self.value.len()
    }

    /// `P α + Q x̃ + R e` (the view right-hand side without `ξ`).
    pub fn evaluate(&self, alpha: &DVector<f64>, x_tilde: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        &self.p * alpha + &self.q * x_tilde + &self.r * noise
    }
}

/// Maps a view to its block form at step `view.time`.
pub fn compile_view(view: &View, theta: &ThetaBundle, psi: &MarketSpec) -> Result<ViewBlock> {
    if view.time < 0 {
        return Err(Error::HistoricalTime { time: view.time });
    }
    let horizon = psi.horizon();
    if view.time as u64 > horizon as u64 {
        return Err(Error::TimeOutOfHorizon { time: view.time, horizon });
    }
    let k = view.time as usize;
    let native = view.kind.native_dim(theta, psi);
    ensure_shape(&view.selector, view.value.len(), native, &format!("{:?} view selector", view.kind))?;

    let d = theta.dims();
    let layout = NoiseLayout::of(theta, psi);
    let rows = view.value.len();
    let sel = &view.selector;
    let mut block = ViewBlock::empty(k, psi.n_assets(), d.n_x, layout.total());
    block.p = DMatrix::zeros(rows, psi.n_assets());
    block.q = DMatrix::zeros(rows, d.n_x);
    block.r = DMatrix::zeros(rows, layout.total());
    block.omega = view.uncertainty.clone();

    match view.kind {
        ViewKind::MacroState => {
            block.value = &view.value - sel * &theta.x_bar;
            block.q = sel.clone();
        }
        ViewKind::MacroObservation => {
            block.value = &view.value - sel * &theta.y_bar;
            block.q = sel * &theta.b;
            block.r.columns_mut(layout.macro_offset(), layout.n_e1).copy_from(&(sel * &theta.h));
        }
        ViewKind::MacroShock => {
            block.value = view.value.clone();
            block.r.columns_mut(layout.macro_offset(), layout.n_e1).copy_from(sel);
        }
        ViewKind::MeanFactorReturn => {
            block.value = &view.value - sel * &theta.f_bar;
            block.q = sel * &theta.gamma;
        }
        ViewKind::FactorReturn => {
            block.value = &view.value - sel * &theta.f_bar;
            block.q = sel * &theta.gamma;
            block.r.columns_mut(layout.macro_offset(), layout.n_e1).copy_from(&(sel * &theta.f_prime));
            block.r.columns_mut(layout.factor_offset(), layout.n_e2).copy_from(&(sel * &theta.f_second));
        }
        ViewKind::MeanAssetReturn => {
            let beta = psi.beta(k).ok_or(Error::MissingBeta(k))?;
            if beta.ncols() != d.n_f {
                return Err(dims(format!("beta has {} factor columns, theta has {} factors", beta.ncols(), d.n_f)));
            }
            let sel_beta = sel * beta;
            block.value = &view.value - &sel_beta * &theta.f_bar;
            block.p = sel.clone();
            block.q = sel_beta * &theta.gamma;
        }
    }
    Ok(block)
}

/// Stacks blocks at the same step: rows of `P, Q, R, ṽ` concatenate and
/// `Ω` becomes block diagonal.
pub fn merge_views(blocks: &[ViewBlock]) -> Result<ViewBlock> {
    let first = blocks.first().ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?;
    for b in &blocks[1..] {
        if b.time != first.time {
            return Err(Error::TimeMismatch(first.time, b.time));
        }
        if b.p.ncols() != first.p.ncols() || b.q.ncols() != first.q.ncols() || b.r.ncols() != first.r.ncols() {
            return Err(dims("view blocks have different column layouts"));
        }
    }
    let ps: Vec<_> = blocks.iter().map(|b| &b.p).collect();
    let qs: Vec<_> = blocks.iter().map(|b| &b.q).collect();
    let rs: Vec<_> = blocks.iter().map(|b| &b.r).collect();
    let vs: Vec<_> = blocks.iter().map(|b| &b.value).collect();
    let os: Vec<_> = blocks.iter().map(|b| &b.omega).collect();
    Ok(ViewBlock {
        time: first.time,
        p: vstack(&ps)?,
        q: vstack(&qs)?,
        r: vstack(&rs)?,
        value: vstack_vec(&vs),
        omega: block_diag(&os),
    })
}

/// Factor `L` with `L Lᵀ = Ω` and `rank(Ω)` columns.
pub fn omega_sqrt(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    psd_factor(&symmetrized(omega.clone()))
}
