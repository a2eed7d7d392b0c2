use std::path::PathBuf;

use condgen::blref::{bl_equivalence_check, BlInputs};
use condgen::estimation::{estimate_link_niw, sample_link, smooth_macro_history, HistoryMode, MacroHistory, ThetaBundle};
use condgen::forecast::{
    condition_history, conditional_forecast, conditional_simulate, mixture_forecast, mixture_simulate, Scenario,
};
use condgen::gaussdlm::GaussianBelief;
use condgen::markets::{default_lambda_grid, ns_fit};
use condgen::rng::{derive_seed, standard_normal_matrix, standard_normal_vector, substream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::config::{load, matrix_rows, vector, GridConfig, LoadedConfig, MatrixSource, Mode, SimulationConfig};
use crate::error::{CliError, Result, Stage};
use crate::ingest::{render_panel, Panel};
use crate::output::{forecast_tables, path_tables, Artifacts, Manifest};
use crate::resolve::{
    resolve_functionals, resolve_history, resolve_market, resolve_models, resolve_prior, resolve_views,
    theta_to_config, Catalog,
};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
    pub bands: Option<Vec<f64>>,
}

/// Largest BL discrepancy `bl-check` accepts.
pub const BL_TOLERANCE: f64 = 1e-6;

const DEFAULT_BANDS: [f64; 2] = [0.05, 0.95];
const DEFAULT_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastCommand {
    Forecast,
    Simulate,
    Mixture,
}

impl ForecastCommand {
    fn name(self) -> &'static str {
        match self {
            Self::Forecast => "forecast",
            Self::Simulate => "simulate",
            Self::Mixture => "mixture",
        }
    }
}

fn loaded(opts: &Options) -> Result<LoadedConfig> {
    let path = opts.config.as_ref().ok_or_else(|| CliError::config("--config", "required for this command"))?;
    load(path)
}

fn out_dir(opts: &Options, cfg: &LoadedConfig) -> Result<PathBuf> {
    match (&opts.out, &cfg.config.output_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(cfg.resolve(p)),
        (None, None) => Err(CliError::config("output_dir", "required unless --out is given")),
    }
}

fn band_levels(opts: &Options, cfg: &LoadedConfig) -> Result<[f64; 2]> {
    let (levels, field) = match (&opts.bands, &cfg.config.bands) {
        (Some(b), _) => (b.clone(), "--bands"),
        (None, Some(b)) => (b.clone(), "bands"),
        (None, None) => return Ok(DEFAULT_BANDS),
    };
    match levels[..] {
        [lo, hi] if 0.0 < lo && lo < hi && hi < 1.0 => Ok([lo, hi]),
        _ => Err(CliError::config(field, format!("expected two increasing levels in (0, 1), got {levels:?}"))),
    }
}

fn simulation_settings(cmd: ForecastCommand, cfg: &LoadedConfig) -> Result<Option<SimulationConfig>> {
    let mode = cfg.config.mode.as_ref();
    match (cmd, mode) {
        (_, None) => Ok(None),
        (ForecastCommand::Forecast, Some(Mode::Analytic)) => Ok(None),
        (ForecastCommand::Simulate, Some(Mode::Simulate(s))) | (ForecastCommand::Mixture, Some(Mode::Mixture(s))) => {
            Ok(Some(*s))
        }
        (cmd, Some(_)) => Err(CliError::config("mode", format!("does not match the {} command", cmd.name()))),
    }
}

/// `forecast`, `simulate` and `mixture`.
pub fn run_forecast(cmd: ForecastCommand, opts: &Options) -> Result<()> {
    let cfg = loaded(opts)?;
    let out = out_dir(opts, &cfg)?;
    let horizon = cfg.config.horizon.ok_or_else(|| CliError::config("horizon", "required"))?;
    if horizon < 1 {
        return Err(CliError::config("horizon", "must be at least 1"));
    }
    let levels = band_levels(opts, &cfg)?;
    let sim = simulation_settings(cmd, &cfg)?;
    let seed = opts.seed.or(sim.and_then(|s| s.seed)).unwrap_or(0);
    let n_paths = match cmd {
        ForecastCommand::Forecast => None,
        ForecastCommand::Simulate => Some(opts.paths.or(sim.and_then(|s| s.n_paths)).unwrap_or(DEFAULT_PATHS)),
        ForecastCommand::Mixture => opts.paths.or(sim.and_then(|s| s.n_paths)),
    };
    if n_paths == Some(0) {
        return Err(CliError::config("--paths", "must be positive"));
    }
    let chunk = cfg.config.paths_chunk.unwrap_or(1000);
    if chunk == 0 {
        return Err(CliError::config("paths_chunk", "must be positive"));
    }

    let models = resolve_models(&cfg)?;
    if models.from_samples && cmd != ForecastCommand::Mixture {
        return Err(CliError::config("model.samples", format!("only usable with the mixture command, not {}", cmd.name())));
    }
    let dims = models.thetas[0].dims();
    let mut series = cfg.config.series.clone();
    let history = resolve_history(&cfg, &mut series, dims)?;
    let psi = resolve_market(&cfg, cfg.config.market.as_ref(), dims.n_f, horizon)?;
    let catalog = Catalog::new(&series, dims, psi.n_assets())?;
    let (views, selectors) = resolve_views(&cfg.config.views, &catalog, horizon)?;
    let functionals = resolve_functionals(&cfg.config.functionals, &catalog, horizon)?;
    let scenario = Scenario::new(psi, views, horizon).with_functionals(functionals);

    let samples: Vec<(ThetaBundle, GaussianBelief)> = models
        .thetas
        .into_iter()
        .map(|t| {
            let terminal = condition_history(&t, &history.y, &history.f).stage("history")?;
            Ok((t, terminal))
        })
        .collect::<Result<_>>()?;
    let n_sets = samples.len();
    let (theta, terminal) = &samples[0];
    let panel = match (cmd, n_paths) {
        (ForecastCommand::Forecast, _) => conditional_forecast(theta, terminal, &scenario),
        (ForecastCommand::Simulate, Some(n)) => conditional_simulate(theta, terminal, &scenario, n, seed),
        (ForecastCommand::Mixture, None) => mixture_forecast(&samples, &scenario),
        (_, Some(n)) => mixture_simulate(&samples, &scenario, n, seed),
        (ForecastCommand::Simulate, None) => unreachable!("simulate always has a path count"),
    }
    .stage(cmd.name())?;

    let mut arts = Artifacts::default();
    forecast_tables(&mut arts, &panel, &catalog, levels)?;
    if n_paths.is_some() {
        path_tables(&mut arts, &panel, &catalog, chunk);
    }
    let mut manifest = Manifest::new(cmd.name(), Some(cfg.sha256.clone()));
    manifest.seed = n_paths.map(|_| seed);
    manifest.n_paths = panel.n_paths;
    manifest.horizon = Some(horizon);
    manifest.bands = Some(levels);
    manifest.n_parameter_sets = Some(n_sets);
    for p in models.inputs.iter().chain(history.macro_panel.iter().map(|p| &p.file)).chain(history.factor_panel.iter().map(|p| &p.file)) {
        manifest.input(p)?;
    }
    manifest.catalog = Some(catalog);
    manifest.selectors = selectors;
    manifest.finish(&mut arts);
    arts.write_all(&out)
}

#[derive(Serialize)]
struct TenorRecord<'a> {
    column: &'a str,
    years: f64,
}

#[derive(Serialize)]
struct NsRecord<'a> {
    lambda: f64,
    tenors: Vec<TenorRecord<'a>>,
    residual_variance: Vec<f64>,
    total_sse: f64,
    n_periods: usize,
}

fn lambda_grid(grid: Option<&GridConfig>) -> Result<Vec<f64>> {
    match grid {
        None => Ok(default_lambda_grid()),
        Some(GridConfig::Values(v)) if !v.is_empty() => Ok(v.clone()),
        Some(GridConfig::Values(_)) => Err(CliError::config("ns.grid", "empty grid")),
        Some(&GridConfig::LogSpaced { min, max, n }) => {
            if !(min > 0.0 && max > min && n >= 2) {
                return Err(CliError::config("ns.grid", "need 0 < min < max and n >= 2"));
            }
            let (lo, hi) = (min.ln(), max.ln());
            Ok((0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect())
        }
    }
}

pub fn fit_ns(opts: &Options) -> Result<()> {
    let cfg = loaded(opts)?;
    let out = out_dir(opts, &cfg)?;
    let ns = cfg.config.ns.as_ref().ok_or_else(|| CliError::config("ns", "required for fit-ns"))?;
    if ns.tenors.len() < 3 {
        return Err(CliError::config("ns.tenors", format!("need at least 3 tenors, got {}", ns.tenors.len())));
    }
    let grid = lambda_grid(ns.grid.as_ref())?;
    let columns: Vec<String> = ns.tenors.iter().map(|t| t.column.clone()).collect();
    let tenors: Vec<f64> = ns.tenors.iter().map(|t| t.years).collect();
    let panel = cfg.panel(&ns.yields_csv)?.select(&columns)?;
    let fit = ns_fit(&panel.complete_rows()?, &tenors, &grid).stage("fit-ns")?;

    let mut arts = Artifacts::default();
    let record = NsRecord {
        lambda: fit.lambda,
        tenors: ns.tenors.iter().map(|t| TenorRecord { column: &t.column, years: t.years }).collect(),
        residual_variance: fit.residual_variance.iter().copied().collect(),
        total_sse: fit.total_sse,
        n_periods: panel.len(),
    };
    arts.add("ns_fit.json", json(&record));
    let factors = Panel {
        file: "ns_factors.csv".into(),
        period_label: panel.period_label.clone(),
        periods: panel.periods.clone(),
        columns: vec!["level".into(), "slope".into(), "curvature".into()],
        rows: fit.factors.iter().map(|f| f.iter().map(|&v| Some(v)).collect()).collect(),
    };
    arts.add("ns_factors.csv", render_panel(&factors));
    let mut manifest = Manifest::new("fit-ns", Some(cfg.sha256.clone()));
    manifest.input(&panel.file)?;
    manifest.finish(&mut arts);
    arts.write_all(&out)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn estimate_var(opts: &Options) -> Result<()> {
    let cfg = loaded(opts)?;
    let out = out_dir(opts, &cfg)?;
    if cfg.config.model.as_ref().is_none_or(|m| m.var.is_none()) {
        return Err(CliError::config("model.var", "required for estimate-var"));
    }
    let models = resolve_models(&cfg)?;
    let mut arts = Artifacts::default();
    arts.add("theta.json", json(&theta_to_config(&models.thetas[0])));
    let mut manifest = Manifest::new("estimate-var", Some(cfg.sha256.clone()));
    for p in &models.inputs {
        manifest.input(p)?;
    }
    manifest.finish(&mut arts);
    arts.write_all(&out)
}

#[derive(Serialize)]
struct LinkRecord {
    lambda: MatrixSource,
    b: MatrixSource,
    nu: f64,
    v: MatrixSource,
}

/// Smoothed history `(x̃[t], e'[t])` for the link regression.
fn regressors(history: MacroHistory) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    match history {
        MacroHistory::Analytic(s) => {
            (s.steps.iter().map(|st| st.state.mean.clone()).collect(), s.steps.iter().map(|st| st.disturbance_mean.clone()).collect())
        }
        MacroHistory::Sampled(mut p) => (p.states.swap_remove(0), p.disturbances.swap_remove(0)),
    }
}

pub fn estimate_link(opts: &Options) -> Result<()> {
    let cfg = loaded(opts)?;
    let out = out_dir(opts, &cfg)?;
    let link = cfg.config.link.clone().unwrap_or_default();
    let seed = opts.seed.unwrap_or(0);
    let models = resolve_models(&cfg)?;
    if models.from_samples {
        return Err(CliError::config("model.samples", "estimate-link needs a single macro model"));
    }
    let theta = &models.thetas[0];
    let dims = theta.dims();
    let mut series = cfg.config.series.clone();
    let history = resolve_history(&cfg, &mut series, dims)?;
    let (Some(macro_panel), Some(factor_panel)) = (&history.macro_panel, &history.factor_panel) else {
        return Err(CliError::config("history", "estimate-link needs both macro_csv and factor_csv"));
    };
    let factors = factor_panel.complete_rows()?;
    let prior = resolve_prior(&cfg, link.prior.as_ref(), dims)?;

    let fit = |mode| -> Result<_> {
        let (xs, es) = regressors(smooth_macro_history(theta, &history.y, mode).stage("history")?);
        estimate_link_niw(&xs, &es, &factors, &prior).stage("estimate-link")
    };
    let posterior = fit(HistoryMode::Analytic)?;
    let point = theta.with_link(posterior.point_link().stage("estimate-link")?).stage("estimate-link")?;

    let mut arts = Artifacts::default();
    arts.add("theta.json", json(&theta_to_config(&point)));
    arts.add(
        "link_posterior.json",
        json(&LinkRecord {
            lambda: matrix_rows(&posterior.lambda),
            b: matrix_rows(&posterior.b),
            nu: posterior.nu,
            v: matrix_rows(&posterior.v),
        }),
    );
    for i in 0..link.n_samples as u64 {
        let post = fit(HistoryMode::Sampled { n_paths: 1, seed: derive_seed(seed, 2 * i) })?;
        let draw = sample_link(&post, derive_seed(seed, 2 * i + 1)).stage("estimate-link")?;
        let theta_i = theta.with_link(draw).stage("estimate-link")?;
        arts.add(format!("samples/theta_{i:05}.json"), json(&theta_to_config(&theta_i)));
    }
    let mut manifest = Manifest::new("estimate-link", Some(cfg.sha256.clone()));
    manifest.seed = Some(seed);
    manifest.n_parameter_sets = Some(link.n_samples);
    for p in models.inputs.iter().chain([&macro_panel.file, &factor_panel.file]) {
        manifest.input(p)?;
    }
    manifest.finish(&mut arts);
    arts.write_all(&out)
}

#[derive(Debug, Serialize)]
pub struct BlCheckReport {
    pub n_instances: usize,
    pub max_discrepancy: f64,
    pub max_mean_discrepancy: f64,
    pub max_cov_discrepancy: f64,
    pub tolerance: f64,
}

/// Random BL problem `i` of the family identified by `seed`: 2 to 6 assets,
/// 1 to 3 views, and absolute, noisy or partly exact view uncertainty.
pub fn random_bl_instance(seed: u64, i: u64) -> BlInputs {
    let mut rng = substream(seed, i);
    let n = rng.random_range(2..=6);
    let k = rng.random_range(1..=3);
    let l = standard_normal_matrix(&mut rng, n, n) * 0.15;
    let sigma = &l * l.transpose() + DMatrix::identity(n, n) * 0.01;
    let raw = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
    let w = &raw / raw.sum();
    let mut inputs = BlInputs {
        r_f: rng.random_range(0.0..0.05),
        sigma,
        w,
        lambda: rng.random_range(1.0..4.0),
        tau: rng.random_range(0.01..0.5),
        p: standard_normal_matrix(&mut rng, k, n),
        v: DVector::zeros(k),
        omega: DMatrix::zeros(k, k),
    };
    let anchor = inputs.prior_mean() + standard_normal_vector(&mut rng, n) * 0.02;
    inputs.v = &inputs.p * anchor;
    let m = standard_normal_matrix(&mut rng, k, k) * 0.05;
    inputs.omega = match i % 3 {
        0 => DMatrix::zeros(k, k),
        1 => &m * m.transpose() + DMatrix::identity(k, k) * 1e-4,
        _ => {
            let mut o = &m * m.transpose() + DMatrix::identity(k, k) * 1e-4;
            o.row_mut(0).fill(0.0);
            o.column_mut(0).fill(0.0);
            o
        }
    };
    inputs
}

fn bl_from_config(cfg: &LoadedConfig) -> Result<Option<BlInputs>> {
    let Some(bl) = &cfg.config.bl else { return Ok(None) };
    let inputs = BlInputs {
        r_f: bl.r_f,
        sigma: cfg.matrix(&bl.sigma, "bl.sigma")?,
        w: vector(&bl.w),
        lambda: bl.lambda,
        tau: bl.tau,
        p: cfg.matrix(&bl.p, "bl.p")?,
        v: vector(&bl.v),
        omega: cfg.matrix(&bl.omega, "bl.omega")?,
    };
    inputs.validate().map_err(|e| CliError::config("bl", e.to_string()))?;
    Ok(Some(inputs))
}

/// Checks the reference BL posterior against the scenario pipeline, on the
/// configured instance or on 100 random ones.
pub fn bl_check(opts: &Options) -> Result<BlCheckReport> {
    let cfg = opts.config.as_ref().map(|p| load(p)).transpose()?;
    let seed = opts.seed.unwrap_or(0);
    let instances: Vec<BlInputs> = match cfg.as_ref().map(bl_from_config).transpose()?.flatten() {
        Some(one) => vec![one],
        None => (0..100).map(|i| random_bl_instance(seed, i)).collect(),
    };
    let mut report = BlCheckReport {
        n_instances: instances.len(),
        max_discrepancy: 0.0,
        max_mean_discrepancy: 0.0,
        max_cov_discrepancy: 0.0,
        tolerance: BL_TOLERANCE,
    };
    for inputs in &instances {
        let r = bl_equivalence_check(inputs).stage("bl-check")?;
        report.max_mean_discrepancy = report.max_mean_discrepancy.max(r.mean_discrepancy);
        report.max_cov_discrepancy = report.max_cov_discrepancy.max(r.cov_discrepancy);
        report.max_discrepancy = report.max_discrepancy.max(r.max_discrepancy());
    }
    if let Some(out) = &opts.out {
        let mut arts = Artifacts::default();
        arts.add("bl_check.json", json(&report));
        let mut manifest = Manifest::new("bl-check", cfg.as_ref().map(|c| c.sha256.clone()));
        manifest.seed = Some(seed);
        manifest.finish(&mut arts);
        arts.write_all(out)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_valid_and_reproducible() {
        for i in 0..30 {
            let a = random_bl_instance(5, i);
            a.validate().unwrap();
            assert_eq!(a.v, random_bl_instance(5, i).v);
        }
    }

    #[test]
    fn bands_must_be_two_increasing_levels() {
        let cfg = LoadedConfig { config: Default::default(), base: PathBuf::new(), sha256: String::new() };
        let opts = |b: Vec<f64>| Options { bands: Some(b), ..Default::default() };
        assert_eq!(band_levels(&opts(vec![0.1, 0.9]), &cfg).unwrap(), [0.1, 0.9]);
        for bad in [vec![0.9, 0.1], vec![0.1], vec![0.0, 0.5], vec![0.1, 0.5, 0.9]] {
            assert!(band_levels(&opts(bad), &cfg).is_err());
        }
    }
}
