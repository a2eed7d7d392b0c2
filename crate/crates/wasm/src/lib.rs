//! Browser bindings. Every entry point takes and returns a JSON string so the
//! page needs no glue beyond `JSON.parse`.

use condgen::blref::{bl_equivalence_check, BlInputs};
use condgen::estimation::ThetaBundle;
use condgen::forecast::{condition_history, conditional_forecast, Scenario, SeriesKind};
use condgen::gaussdlm::ObservationPanel;
use condgen::markets::{default_lambda_grid, ns_basis, ns_fit, MarketSpec};
use condgen::views::{View, ViewKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

type Rows = Vec<Vec<f64>>;

fn matrix(rows: &Rows, field: &str) -> Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{field}: rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Deserialize)]
struct ModelInput {
    a: Rows,
    b: Rows,
    gamma: Rows,
    g: Rows,
    h: Rows,
    factor_cov: Rows,
    x_bar: Vec<f64>,
    y_bar: Vec<f64>,
    f_bar: Vec<f64>,
}

#[derive(Deserialize)]
struct ViewInput {
    kind: String,
    time: i64,
    index: usize,
    value: f64,
    #[serde(default)]
    stdev: f64,
}

#[derive(Deserialize)]
struct FanChartInput {
    model: ModelInput,
    horizon: usize,
    #[serde(default)]
    views: Vec<ViewInput>,
    #[serde(default = "default_bands")]
    bands: [f64; 2],
}

fn default_bands() -> [f64; 2] {
    [0.05, 0.95]
}

#[derive(Serialize)]
struct Fan {
    name: String,
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize)]
struct FanChartOutput {
    steps: Vec<usize>,
    conditional: Vec<Fan>,
    unconditional: Vec<Fan>,
}

fn view_kind(name: &str) -> Result<ViewKind, String> {
    ViewKind::ALL
        .into_iter()
        .find(|k| kind_name(*k) == name)
        .ok_or_else(|| format!("unknown view kind {name:?}"))
}

fn kind_name(k: ViewKind) -> &'static str {
    match k {
        ViewKind::MacroState => "macro_state",
        ViewKind::MacroObservation => "macro_observation",
        ViewKind::MacroShock => "macro_shock",
        ViewKind::MeanFactorReturn => "mean_factor_return",
        ViewKind::FactorReturn => "factor_return",
        ViewKind::MeanAssetReturn => "mean_asset_return",
    }
}

fn fans(theta: &ThetaBundle, scenario: &Scenario, bands: [f64; 2]) -> Result<Vec<Fan>, String> {
    let terminal = condition_history(theta, &ObservationPanel::new(), &ObservationPanel::new()).map_err(err)?;
    let panel = conditional_forecast(theta, &terminal, scenario).map_err(err)?;
    let mut out = Vec::new();
    for (kind, prefix) in [(SeriesKind::Y, "y"), (SeriesKind::F, "f")] {
        let s = panel.core(kind);
        let mean = s.level_mean();
        let b = s.bands(&bands).map_err(err)?;
        for i in 0..s.width() {
            out.push(Fan {
                name: format!("{prefix}{i}"),
                mean: mean.iter().map(|m| m[i]).collect(),
                lo: b[0].iter().map(|m| m[i]).collect(),
                hi: b[1].iter().map(|m| m[i]).collect(),
            });
        }
    }
    Ok(out)
}

/// Conditional and unconditional fan charts for the observables and factors.
pub fn fan_chart_json(input: &str) -> Result<String, String> {
    let input: FanChartInput = serde_json::from_str(input).map_err(err)?;
    let m = &input.model;
    let theta = ThetaBundle::with_factor_covariance(
        matrix(&m.a, "a")?,
        matrix(&m.b, "b")?,
        matrix(&m.gamma, "gamma")?,
        matrix(&m.g, "g")?,
        matrix(&m.h, "h")?,
        &matrix(&m.factor_cov, "factor_cov")?,
        DVector::from_vec(m.x_bar.clone()),
        DVector::from_vec(m.y_bar.clone()),
        DVector::from_vec(m.f_bar.clone()),
    )
    .map_err(err)?;
    if input.horizon == 0 {
        return Err("horizon must be at least 1".into());
    }
    let psi = MarketSpec::without_assets(theta.dims().n_f, input.horizon);
    let views = input
        .views
        .iter()
        .map(|v| {
            let kind = view_kind(&v.kind)?;
            View::with_stdev(kind, v.time, kind.native_dim(&theta, &psi), v.index, v.value, v.stdev).map_err(err)
        })
        .collect::<Result<Vec<_>, String>>()?;
    let conditional = fans(&theta, &Scenario::new(psi.clone(), views, input.horizon), input.bands)?;
    let unconditional = fans(&theta, &Scenario::new(psi, Vec::new(), input.horizon), input.bands)?;
    let out = FanChartOutput { steps: (0..=input.horizon).collect(), conditional, unconditional };
    serde_json::to_string(&out).map_err(err)
}

#[derive(Deserialize)]
struct NsInput {
    tenors: Vec<f64>,
    yields: Vec<f64>,
    grid: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct NsOutput {
    lambda: f64,
    level: f64,
    slope: f64,
    curvature: f64,
    sse: f64,
    curve_tenors: Vec<f64>,
    curve: Vec<f64>,
}

/// Fits a Nelson-Siegel curve to one cross-section and samples the fit.
pub fn ns_fit_json(input: &str) -> Result<String, String> {
    let input: NsInput = serde_json::from_str(input).map_err(err)?;
    if input.tenors.len() != input.yields.len() {
        return Err(format!("{} tenors but {} yields", input.tenors.len(), input.yields.len()));
    }
    let grid = input.grid.unwrap_or_else(default_lambda_grid);
    let fit = ns_fit(&[DVector::from_vec(input.yields)], &input.tenors, &grid).map_err(err)?;
    let beta = fit.factors[0];
    let top = input.tenors.iter().copied().fold(0.0, f64::max);
    let curve_tenors: Vec<f64> = (1..=120).map(|i| top * i as f64 / 120.0).collect();
    let curve = curve_tenors
        .iter()
        .map(|&t| ns_basis(t, fit.lambda).map(|b| b.dot(&beta)))
        .collect::<condgen::Result<Vec<_>>>()
        .map_err(err)?;
    let out = NsOutput { lambda: fit.lambda, level: beta[0], slope: beta[1], curvature: beta[2], sse: fit.total_sse, curve_tenors, curve };
    serde_json::to_string(&out).map_err(err)
}

#[derive(Deserialize)]
struct BlInput {
    r_f: f64,
    sigma: Rows,
    w: Vec<f64>,
    lambda: f64,
    tau: f64,
    p: Rows,
    v: Vec<f64>,
    omega: Rows,
}

#[derive(Serialize)]
struct BlOutput {
    prior_mean: Vec<f64>,
    bl_mean: Vec<f64>,
    csg_mean: Vec<f64>,
    bl_cov: Rows,
    csg_cov: Rows,
    mean_discrepancy: f64,
    cov_discrepancy: f64,
}

/// Black-Litterman posterior computed directly and through the scenario
/// pipeline.
pub fn bl_compare_json(input: &str) -> Result<String, String> {
    let i: BlInput = serde_json::from_str(input).map_err(err)?;
    let inputs = BlInputs {
        r_f: i.r_f,
        sigma: matrix(&i.sigma, "sigma")?,
        w: DVector::from_vec(i.w),
        lambda: i.lambda,
        tau: i.tau,
        p: matrix(&i.p, "p")?,
        v: DVector::from_vec(i.v),
        omega: matrix(&i.omega, "omega")?,
    };
    inputs.validate().map_err(err)?;
    let r = bl_equivalence_check(&inputs).map_err(err)?;
    let out = BlOutput {
        prior_mean: vec_of(&inputs.prior_mean()),
        bl_mean: vec_of(&r.bl_mean),
        csg_mean: vec_of(&r.csg_mean),
        bl_cov: rows(&r.bl_cov),
        csg_cov: rows(&r.csg_cov),
        mean_discrepancy: r.mean_discrepancy,
        cov_discrepancy: r.cov_discrepancy,
    };
    serde_json::to_string(&out).map_err(err)
}

#[wasm_bindgen]
pub fn fan_chart(input: &str) -> Result<String, JsError> {
    fan_chart_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fit_nelson_siegel(input: &str) -> Result<String, JsError> {
    ns_fit_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bl_compare(input: &str) -> Result<String, JsError> {
    bl_compare_json(input).map_err(|e| JsError::new(&e))
}
