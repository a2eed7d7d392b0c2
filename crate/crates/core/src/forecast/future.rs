use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::estimation::ThetaBundle;
use crate::gaussdlm::{DlmSpec, GaussianBelief, ObservationPanel, StepMatrices};
use crate::linalg::{block_diag, hstack};
use crate::markets::MarketSpec;
use crate::views::{merge_views, omega_sqrt, NoiseLayout, ViewBlock};

/// Layout of the future state `(x̃, α)` and disturbance
/// `(e', e'', e''', e'''')`, where `e''''` drives view noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FutureLayout {
    pub n_x: usize,
    pub n_assets: usize,
    pub noise: NoiseLayout,
    /// Width of `e''''`: the largest rank of any `Ω[t]`.
    pub n_e4: usize,
}

impl FutureLayout {
    pub fn n_state(&self) -> usize {
        self.n_x + self.n_assets
    }

    pub fn n_noise(&self) -> usize {
        self.noise.total() + self.n_e4
    }

    /// Length of the stacked vector `z = (x̃, α, e', e'', e''', e'''')`.
    pub fn n_joint(&self) -> usize {
        self.n_state() + self.n_noise()
    }

    pub fn x_offset(&self) -> usize {
        0
    }

    pub fn alpha_offset(&self) -> usize {
        self.n_x
    }

    /// Offset of `e'` in `z`; `e''` and `e'''` follow per [`NoiseLayout`].
    pub fn noise_offset(&self) -> usize {
        self.n_state()
    }
}

/// The DLM over horizon steps `0..=H` whose observations are the compiled
/// views.
#[derive(Debug, Clone)]
pub struct FutureDlm {
    pub spec: DlmSpec,
    pub observations: ObservationPanel,
    /// Merged view block per step (zero rows where there are no views).
    pub blocks: Vec<ViewBlock>,
    pub layout: FutureLayout,
}

/// Assembles the future DLM:
///
/// ```text
/// (x̃, α)[t+1] = [[A, 0], [0, Φ]] (x̃, α)[t] + [[G, 0, 0, 0], [0, 0, S[t], 0]] e[t]
///        ṽ[t] = [Q[t], P[t]] (x̃, α)[t] + [R[t], Ω[t]^½] e[t]
/// (x̃, α)[0]  ~ N((x̃[T|T], 0), blockdiag(P[T|T], τ Σʳ[0]))
/// ```
///
/// `Ω^½` is zero-padded to the largest rank over the horizon.
pub fn build_future_dlm(
    theta: &ThetaBundle,
    psi: &MarketSpec,
    blocks: &[ViewBlock],
    terminal: &GaussianBelief,
    horizon: usize,
) -> Result<FutureDlm> {
    if psi.horizon() < horizon {
        return Err(Error::MissingMarketSpec(psi.horizon() + 1));
    }
    let d = theta.dims();
    if psi.n_factors() != d.n_f {
        return Err(dims(format!("market exposures use {} factors, model has {}", psi.n_factors(), d.n_f)));
    }
    if terminal.dim() != d.n_x {
        return Err(dims(format!("terminal belief has dimension {}, model has {} states", terminal.dim(), d.n_x)));
    }
    let n_a = psi.n_assets();
    let noise = NoiseLayout::of(theta, psi);

    let mut per_step: Vec<Vec<ViewBlock>> = vec![Vec::new(); horizon + 1];
    for b in blocks {
        if b.time > horizon {
            return Err(Error::TimeOutOfHorizon { time: b.time as i64, horizon });
        }
        if b.p.ncols() != n_a || b.q.ncols() != d.n_x || b.r.ncols() != noise.total() {
            return Err(dims(format!("view block at step {} does not match the model layout", b.time)));
        }
        per_step[b.time].push(b.clone());
    }
    let merged: Vec<ViewBlock> = per_step
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            if v.is_empty() {
                Ok(ViewBlock::empty(k, n_a, d.n_x, noise.total()))
            } else {
                merge_views(&v)
            }
        })
        .collect::<Result<_>>()?;
    let roots: Vec<DMatrix<f64>> = merged.iter().map(|b| omega_sqrt(&b.omega)).collect::<Result<_>>()?;
    let n_e4 = roots.iter().map(|r| r.ncols()).max().unwrap_or(0);
    let layout = FutureLayout { n_x: d.n_x, n_assets: n_a, noise, n_e4 };

    let transition = block_diag(&[&theta.a, &psi.phi()]);
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut observations = ObservationPanel::new();
    for (k, (block, root)) in merged.iter().zip(&roots).enumerate() {
        let rows = block.rows();
        let mut state_noise = DMatrix::zeros(layout.n_state(), layout.n_noise());
        state_noise.view_mut((0, 0), (d.n_x, d.n_e1)).copy_from(&theta.g);
        state_noise
            .view_mut((d.n_x, noise.alpha_offset()), (n_a, n_a))
            .copy_from(&psi.alpha_loading(k)?);
        let measurement = hstack(&[&block.q, &block.p])?;
        let mut measurement_noise = DMatrix::zeros(rows, layout.n_noise());
        measurement_noise.columns_mut(0, noise.total()).copy_from(&block.r);
        measurement_noise.view_mut((0, noise.total()), (rows, root.ncols())).copy_from(root);
        steps.push(StepMatrices { transition: transition.clone(), measurement, state_noise, measurement_noise });
        observations.push_masked(block.value.clone(), vec![true; rows])?;
    }

    let mut mean = DVector::zeros(layout.n_state());
    mean.rows_mut(0, d.n_x).copy_from(&terminal.mean);
    let alpha_prior = psi.tau() * psi.residual_cov(0).ok_or(Error::MissingMarketSpec(0))?;
    let cov = block_diag(&[&terminal.cov, &alpha_prior]);
    let spec = DlmSpec::time_varying(steps, mean, cov)?;
    Ok(FutureDlm { spec, observations, blocks: merged, layout })
}
