//! Turns config DTOs into library objects and records how named selectors
//! were resolved.

use std::collections::BTreeMap;

use condgen::estimation::{estimate_var_sur, NiwPosterior, ThetaBundle, ThetaDims};
use condgen::forecast::{LinearFunctional, SeriesKind};
use condgen::gaussdlm::{GaussianBelief, ObservationPanel};
use condgen::markets::{AlphaPersistence, MarketSpec};
use condgen::views::{View, ViewKind};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{
    load_theta_file, vector, FunctionalConfig, LoadedConfig, MarketConfig, NiwPriorConfig, PhiConfig, Schedule,
    SeriesCatalog, SeriesGroup, Selector, ThetaConfig, ThetaSource, ViewConfig, ViewKindConfig,
};
use crate::error::{CliError, Result, Stage};
use crate::ingest::Panel;

/// Series names with defaults filled in and lengths checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Catalog {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub f: Vec<String>,
    pub shocks: Vec<String>,
    pub assets: Vec<String>,
}

fn names(given: &[String], n: usize, prefix: &str, field: &str) -> Result<Vec<String>> {
    if given.is_empty() {
        return Ok((0..n).map(|i| format!("{prefix}{i}")).collect());
    }
    if given.len() != n {
        return Err(CliError::config(field, format!("{} names for {n} series", given.len())));
    }
    if let Some(dup) = given.iter().enumerate().find(|(i, g)| given[..*i].contains(g)) {
        return Err(CliError::config(field, format!("duplicate name {}", dup.1)));
    }
    Ok(given.to_vec())
}

impl Catalog {
    pub fn new(given: &SeriesCatalog, dims: ThetaDims, n_assets: usize) -> Result<Self> {
        Ok(Self {
            x: names(&given.x, dims.n_x, "x", "series.x")?,
            y: names(&given.y, dims.n_y, "y", "series.y")?,
            f: names(&given.f, dims.n_f, "f", "series.f")?,
            shocks: names(&given.shocks, dims.n_e1, "e", "series.shocks")?,
            assets: names(&given.assets, n_assets, "asset", "series.assets")?,
        })
    }

    pub fn group(&self, kind: SeriesKind) -> &[String] {
        match kind {
            SeriesKind::X => &self.x,
            SeriesKind::Y => &self.y,
            SeriesKind::F | SeriesKind::MuF => &self.f,
            SeriesKind::Alpha | SeriesKind::Mu | SeriesKind::R => &self.assets,
            SeriesKind::Eps => &[],
        }
    }
}

pub fn view_kind(k: ViewKindConfig) -> ViewKind {
    match k {
        ViewKindConfig::MacroState => ViewKind::MacroState,
        ViewKindConfig::MacroObservation => ViewKind::MacroObservation,
        ViewKindConfig::MacroShock => ViewKind::MacroShock,
        ViewKindConfig::MeanFactorReturn => ViewKind::MeanFactorReturn,
        ViewKindConfig::FactorReturn => ViewKind::FactorReturn,
        ViewKindConfig::MeanAssetReturn => ViewKind::MeanAssetReturn,
    }
}

pub fn series_kind(g: SeriesGroup) -> SeriesKind {
    match g {
        SeriesGroup::X => SeriesKind::X,
        SeriesGroup::Y => SeriesKind::Y,
        SeriesGroup::F => SeriesKind::F,
        SeriesGroup::MuF => SeriesKind::MuF,
        SeriesGroup::Alpha => SeriesKind::Alpha,
        SeriesGroup::Mu => SeriesKind::Mu,
        SeriesGroup::R => SeriesKind::R,
    }
}

fn view_names(catalog: &Catalog, kind: ViewKind) -> &[String] {
    match kind {
        ViewKind::MacroState => &catalog.x,
        ViewKind::MacroObservation => &catalog.y,
        ViewKind::MacroShock => &catalog.shocks,
        ViewKind::MeanFactorReturn | ViewKind::FactorReturn => &catalog.f,
        ViewKind::MeanAssetReturn => &catalog.assets,
    }
}

/// One `(name, index, weight)` term of a resolved selector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectorTerm {
    pub name: String,
    pub index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectorRecord {
    pub view: usize,
    pub kind: ViewKindConfig,
    pub time: i64,
    pub terms: Vec<SelectorTerm>,
}

fn lookup(names: &[String], name: &str, field: &str) -> Result<usize> {
    names.iter().position(|n| n == name).ok_or_else(|| {
        CliError::config(field, format!("unknown series {name:?} (known: {})", names.join(", ")))
    })
}

fn weights_row(names: &[String], weights: &BTreeMap<String, f64>, field: &str) -> Result<(DVector<f64>, Vec<SelectorTerm>)> {
    let mut row = DVector::zeros(names.len());
    let mut terms = Vec::new();
    for (name, &w) in weights {
        let index = lookup(names, name, &format!("{field}.{name}"))?;
        row[index] += w;
        terms.push(SelectorTerm { name: name.clone(), index, weight: w });
    }
    Ok((row, terms))
}

fn selector_row(names: &[String], sel: &Selector, field: &str) -> Result<(DVector<f64>, Vec<SelectorTerm>)> {
    match sel {
        Selector::Index(i) => {
            if *i >= names.len() {
                return Err(CliError::config(field, format!("index {i} out of range for {} series", names.len())));
            }
            let mut row = DVector::zeros(names.len());
            row[*i] = 1.0;
            Ok((row, vec![SelectorTerm { name: names[*i].clone(), index: *i, weight: 1.0 }]))
        }
        Selector::Name(n) => selector_row(names, &Selector::Index(lookup(names, n, field)?), field),
        Selector::Weights(w) => weights_row(names, w, field),
    }
}

pub fn resolve_views(views: &[ViewConfig], catalog: &Catalog, horizon: usize) -> Result<(Vec<View>, Vec<SelectorRecord>)> {
    let mut out = Vec::with_capacity(views.len());
    let mut records = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let field = format!("views[{i}]");
        let kind = view_kind(v.kind);
        if v.time < 0 || v.time > horizon as i64 {
            return Err(CliError::config(format!("{field}.time"), format!("{} outside 0..={horizon}", v.time)));
        }
        if !(v.stdev >= 0.0 && v.stdev.is_finite()) {
            return Err(CliError::config(format!("{field}.stdev"), "must be finite and nonnegative"));
        }
        let names = view_names(catalog, kind);
        let (row, terms) = selector_row(names, &v.select, &format!("{field}.select"))?;
        let view = View::new(
            kind,
            v.time,
            DMatrix::from_row_slice(1, row.len(), row.as_slice()),
            DVector::from_element(1, v.value),
            DMatrix::from_element(1, 1, v.stdev * v.stdev),
        )
        .map_err(|e| CliError::config(field.clone(), e.to_string()))?;
        out.push(view);
        records.push(SelectorRecord { view: i, kind: v.kind, time: v.time, terms });
    }
    Ok((out, records))
}

pub fn resolve_functionals(
    cfg: &[FunctionalConfig],
    catalog: &Catalog,
    horizon: usize,
) -> Result<Vec<LinearFunctional>> {
    let mut seen: Vec<&str> = Vec::new();
    cfg.iter()
        .enumerate()
        .map(|(i, f)| {
            let field = format!("functionals[{i}]");
            let name = match f {
                FunctionalConfig::Linear { name, .. } | FunctionalConfig::ZeroCouponBond { name, .. } => name,
            };
            if seen.contains(&name.as_str()) {
                return Err(CliError::config(format!("{field}.name"), format!("duplicate functional {name}")));
            }
            seen.push(name);
            match f {
                FunctionalConfig::Linear { name, base, weights, offset, exponentiate } => {
                    let kind = series_kind(*base);
                    let (row, _) = weights_row(catalog.group(kind), weights, &format!("{field}.weights"))?;
                    Ok(LinearFunctional::constant(name.clone(), kind, row, *offset, *exponentiate))
                }
                FunctionalConfig::ZeroCouponBond { name, factors, lambda, maturity_years, step_years, face } => {
                    let mut idx = [0; 3];
                    for (j, n) in factors.iter().enumerate() {
                        idx[j] = lookup(&catalog.f, n, &format!("{field}.factors[{j}]"))?;
                    }
                    LinearFunctional::zero_coupon_bond(
                        name.clone(),
                        catalog.f.len(),
                        idx,
                        *lambda,
                        *maturity_years,
                        *face,
                        *step_years,
                        horizon,
                    )
                    .map_err(|e| CliError::config(field, e.to_string()))
                }
            }
        })
        .collect()
}

fn schedule(cfg: &LoadedConfig, s: &Schedule, horizon: usize, field: &str) -> Result<Vec<DMatrix<f64>>> {
    match s {
        Schedule::Constant(m) => Ok(vec![cfg.matrix(m, field)?; horizon + 1]),
        Schedule::PerStep(list) => {
            if list.len() != horizon + 1 {
                return Err(CliError::config(field, format!("{} entries for {} steps", list.len(), horizon + 1)));
            }
            list.iter().enumerate().map(|(k, m)| cfg.matrix(m, &format!("{field}[{k}]"))).collect()
        }
    }
}

pub fn resolve_market(cfg: &LoadedConfig, market: Option<&MarketConfig>, n_f: usize, horizon: usize) -> Result<MarketSpec> {
    let Some(m) = market else {
        return Ok(MarketSpec::without_assets(n_f, horizon));
    };
    let betas = schedule(cfg, &m.beta, horizon, "market.beta")?;
    let resid = schedule(cfg, &m.residual_cov, horizon, "market.residual_cov")?;
    let n_assets = betas[0].nrows();
    if let Some(k) = betas.iter().position(|b| b.ncols() != n_f) {
        return Err(CliError::config(
            format!("market.beta[{k}]"),
            format!("{} columns but the model has {n_f} factors", betas[k].ncols()),
        ));
    }
    let persistence = match &m.phi {
        PhiConfig::Keyword(k) if k == "constant" => AlphaPersistence::ConstantAlpha,
        PhiConfig::Keyword(k) => {
            return Err(CliError::config("market.phi", format!("expected \"constant\", a number or a list, got {k:?}")))
        }
        PhiConfig::Scalar(p) => AlphaPersistence::Diagonal(DVector::from_element(n_assets, *p)),
        PhiConfig::Diagonal(p) => AlphaPersistence::Diagonal(vector(p)),
    };
    MarketSpec::new(betas, resid, m.tau, persistence).map_err(|e| CliError::config("market", e.to_string()))
}

pub fn theta_from_config(cfg: &LoadedConfig, t: &ThetaConfig, field: &str) -> Result<ThetaBundle> {
    let m = |src, name: &str| cfg.matrix(src, &format!("{field}.{name}"));
    let bad = |e: condgen::Error| CliError::config(field, e.to_string());
    let theta = match (&t.f_prime, &t.f_second, &t.factor_cov) {
        (Some(fp), Some(fs), None) => ThetaBundle::new(
            m(&t.a, "a")?,
            m(&t.b, "b")?,
            m(&t.gamma, "gamma")?,
            m(&t.g, "g")?,
            m(&t.h, "h")?,
            m(fp, "f_prime")?,
            m(fs, "f_second")?,
            vector(&t.x_bar),
            vector(&t.y_bar),
            vector(&t.f_bar),
        ),
        (None, None, Some(fc)) => ThetaBundle::with_factor_covariance(
            m(&t.a, "a")?,
            m(&t.b, "b")?,
            m(&t.gamma, "gamma")?,
            m(&t.g, "g")?,
            m(&t.h, "h")?,
            &m(fc, "factor_cov")?,
            vector(&t.x_bar),
            vector(&t.y_bar),
            vector(&t.f_bar),
        ),
        _ => return Err(CliError::config(field, "give either f_prime and f_second, or factor_cov")),
    }
    .map_err(bad)?;
    match &t.initial {
        Some(b) => {
            let belief = GaussianBelief::new(vector(&b.mean), m(&b.cov, "initial.cov")?, 0, None);
            theta.with_initial(belief).map_err(bad)
        }
        None => Ok(theta),
    }
}

pub fn theta_to_config(theta: &ThetaBundle) -> ThetaConfig {
    use crate::config::{matrix_rows, BeliefConfig};
    ThetaConfig {
        a: matrix_rows(&theta.a),
        b: matrix_rows(&theta.b),
        gamma: matrix_rows(&theta.gamma),
        g: matrix_rows(&theta.g),
        h: matrix_rows(&theta.h),
        f_prime: Some(matrix_rows(&theta.f_prime)),
        f_second: Some(matrix_rows(&theta.f_second)),
        factor_cov: None,
        x_bar: theta.x_bar.iter().copied().collect(),
        y_bar: theta.y_bar.iter().copied().collect(),
        f_bar: theta.f_bar.iter().copied().collect(),
        initial: theta.initial.as_ref().map(|b| BeliefConfig { mean: b.mean.iter().copied().collect(), cov: matrix_rows(&b.cov) }),
    }
}

/// The parameter sets named by `model`, plus any files read on the way.
pub struct Models {
    pub thetas: Vec<ThetaBundle>,
    pub from_samples: bool,
    pub inputs: Vec<std::path::PathBuf>,
}

pub fn resolve_models(cfg: &LoadedConfig) -> Result<Models> {
    let model = cfg.config.model.as_ref().ok_or_else(|| CliError::config("model", "required"))?;
    let set = [model.inline.is_some(), model.var.is_some(), model.samples.is_some()].iter().filter(|&&b| b).count();
    if set != 1 {
        return Err(CliError::config("model", format!("exactly one of inline, var, samples must be set ({set} given)")));
    }
    if let Some(src) = &model.inline {
        return Ok(match src {
            ThetaSource::Inline(t) => Models { thetas: vec![theta_from_config(cfg, t, "model.inline")?], from_samples: false, inputs: vec![] },
            ThetaSource::File(p) => {
                let path = cfg.resolve(p);
                let t = load_theta_file(&path)?;
                Models { thetas: vec![theta_from_config(cfg, &t, "model.inline")?], from_samples: false, inputs: vec![path] }
            }
        });
    }
    if let Some(var) = &model.var {
        let y = cfg.panel(&var.macro_csv)?;
        let f = var.factor_csv.as_ref().map(|s| cfg.panel(s)).transpose()?;
        let mut inputs = vec![y.file.clone()];
        let f_rows = match &f {
            Some(f) => {
                same_periods(&y, f)?;
                inputs.push(f.file.clone());
                f.complete_rows()?
            }
            None => Vec::new(),
        };
        let theta = estimate_var_sur(&y.complete_rows()?, &f_rows, var.lags).stage("estimate-var")?;
        return Ok(Models { thetas: vec![theta], from_samples: false, inputs });
    }
    let dir = cfg.resolve(&model.samples.as_ref().expect("one source is set").dir);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::config("model.samples.dir", format!("no .json files in {}", dir.display())));
    }
    let thetas = files
        .iter()
        .map(|p| theta_from_config(cfg, &load_theta_file(p)?, &format!("model.samples[{}]", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let dims = thetas[0].dims();
    if let Some(i) = thetas.iter().position(|t| t.dims() != dims) {
        return Err(CliError::config("model.samples.dir", format!("{} has different dimensions", files[i].display())));
    }
    Ok(Models { thetas, from_samples: true, inputs: files })
}

pub fn same_periods(a: &Panel, b: &Panel) -> Result<()> {
    if a.periods != b.periods {
        let row = a.periods.iter().zip(&b.periods).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
        return Err(CliError::SchemaMismatch {
            file: b.file.clone(),
            message: format!("periods differ from {} at data row {}", a.file.display(), row + 1),
        });
    }
    Ok(())
}

/// Macro and factor history panels with columns matched to the catalog.
/// Unnamed groups adopt the CSV's column order and names.
pub struct HistoryData {
    pub y: ObservationPanel,
    pub f: ObservationPanel,
    pub macro_panel: Option<Panel>,
    pub factor_panel: Option<Panel>,
}

fn aligned(panel: Panel, given: &mut Vec<String>, n: usize, field: &str) -> Result<Panel> {
    if given.is_empty() {
        if panel.columns.len() != n {
            return Err(CliError::SchemaMismatch {
                file: panel.file.clone(),
                message: format!("{} columns but {field} needs {n}", panel.columns.len()),
            });
        }
        *given = panel.columns.clone();
        return Ok(panel);
    }
    panel.select(given)
}

pub fn resolve_history(cfg: &LoadedConfig, series: &mut SeriesCatalog, dims: ThetaDims) -> Result<HistoryData> {
    let Some(h) = &cfg.config.history else {
        return Ok(HistoryData { y: ObservationPanel::new(), f: ObservationPanel::new(), macro_panel: None, factor_panel: None });
    };
    let y = h.macro_csv.as_ref().map(|s| cfg.panel(s)).transpose()?;
    let f = h.factor_csv.as_ref().map(|s| cfg.panel(s)).transpose()?;
    let y = y.map(|p| aligned(p, &mut series.y, dims.n_y, "series.y")).transpose()?;
    let f = f.map(|p| aligned(p, &mut series.f, dims.n_f, "series.f")).transpose()?;
    if let (Some(a), Some(b)) = (&y, &f) {
        same_periods(a, b)?;
    }
    Ok(HistoryData {
        y: y.as_ref().map_or_else(ObservationPanel::new, Panel::observations),
        f: f.as_ref().map_or_else(ObservationPanel::new, Panel::observations),
        macro_panel: y,
        factor_panel: f,
    })
}

pub fn resolve_prior(cfg: &LoadedConfig, prior: Option<&NiwPriorConfig>, dims: ThetaDims) -> Result<NiwPosterior> {
    match prior {
        None => Ok(NiwPosterior::flat(dims.n_x, dims.n_e1, dims.n_f)),
        Some(p) => NiwPosterior::new(
            cfg.matrix(&p.lambda, "link.prior.lambda")?,
            cfg.matrix(&p.b, "link.prior.b")?,
            p.nu,
            cfg.matrix(&p.v, "link.prior.v")?,
            dims.n_x,
            dims.n_e1,
        )
        .map_err(|e| CliError::config("link.prior", e.to_string())),
    }
}
