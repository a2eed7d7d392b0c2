//! Run configuration as read from JSON. Relative paths are resolved against
//! the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::ingest::{read_matrix, read_panel, Panel};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSource>,
    #[serde(default)]
    pub series: SeriesCatalog,
    pub history: Option<History>,
    pub market: Option<MarketConfig>,
    #[serde(default)]
    pub views: Vec<ViewConfig>,
    pub horizon: Option<usize>,
    pub mode: Option<Mode>,
    pub bands: Option<Vec<f64>>,
    #[serde(default)]
    pub functionals: Vec<FunctionalConfig>,
    pub output_dir: Option<PathBuf>,
    /// Paths per file in simulation output.
    pub paths_chunk: Option<usize>,
    pub ns: Option<NsConfig>,
    pub link: Option<LinkConfig>,
    pub bl: Option<BlConfig>,
}

/// Exactly one field must be set.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    pub inline: Option<ThetaSource>,
    pub var: Option<VarConfig>,
    pub samples: Option<SamplesConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ThetaSource {
    File(PathBuf),
    Inline(Box<ThetaConfig>),
}

/// Either `f_prime` and `f_second`, or `factor_cov` alone.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaConfig {
    pub a: MatrixSource,
    pub b: MatrixSource,
    pub gamma: MatrixSource,
    pub g: MatrixSource,
    pub h: MatrixSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_prime: Option<MatrixSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_second: Option<MatrixSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_cov: Option<MatrixSource>,
    pub x_bar: Vec<f64>,
    pub y_bar: Vec<f64>,
    pub f_bar: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<BeliefConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefConfig {
    pub mean: Vec<f64>,
    pub cov: MatrixSource,
}

/// A matrix inline as nested rows, or a reference to a headerless CSV.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarConfig {
    pub macro_csv: CsvSource,
    pub factor_csv: Option<CsvSource>,
    #[serde(default = "one")]
    pub lags: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesConfig {
    /// Directory of parameter files, one JSON theta per file.
    pub dir: PathBuf,
}

/// Names for each variable group; empty groups get default names.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeriesCatalog {
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub y: Vec<String>,
    #[serde(default)]
    pub f: Vec<String>,
    #[serde(default)]
    pub shocks: Vec<String>,
    #[serde(default)]
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct History {
    pub macro_csv: Option<CsvSource>,
    pub factor_csv: Option<CsvSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CsvSource {
    Path(PathBuf),
    Spec {
        path: PathBuf,
        #[serde(default)]
        resample: Option<Resample>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    Quarterly,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub beta: Schedule,
    pub residual_cov: Schedule,
    pub tau: f64,
    pub phi: PhiConfig,
}

/// One matrix for every step, or one per step `0..=H`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(MatrixSource),
    PerStep(Vec<MatrixSource>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PhiConfig {
    /// `"constant"` for the unit-persistence limit.
    Keyword(String),
    Scalar(f64),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ViewKindConfig {
    MacroState,
    MacroObservation,
    MacroShock,
    MeanFactorReturn,
    FactorReturn,
    MeanAssetReturn,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    pub kind: ViewKindConfig,
    pub time: i64,
    pub select: Selector,
    pub value: f64,
    /// Zero makes the view exact.
    #[serde(default)]
    pub stdev: f64,
}

/// A series name, a position, or named weights.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    Index(usize),
    Name(String),
    Weights(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analytic,
    Simulate(SimulationConfig),
    Mixture(SimulationConfig),
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SeriesGroup {
    X,
    Y,
    F,
    MuF,
    Alpha,
    Mu,
    R,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalConfig {
    Linear {
        name: String,
        base: SeriesGroup,
        weights: BTreeMap<String, f64>,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        exponentiate: bool,
    },
    ZeroCouponBond {
        name: String,
        /// Level, slope and curvature factor names.
        factors: [String; 3],
        lambda: f64,
        maturity_years: f64,
        step_years: f64,
        #[serde(default = "unit")]
        face: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsConfig {
    pub yields_csv: CsvSource,
    pub tenors: Vec<TenorConfig>,
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenorConfig {
    pub column: String,
    pub years: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Values(Vec<f64>),
    LogSpaced { min: f64, max: f64, n: usize },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// Parameter draws written next to the point estimate.
    #[serde(default)]
    pub n_samples: usize,
    /// Conjugate prior; flat when absent.
    pub prior: Option<NiwPriorConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NiwPriorConfig {
    pub lambda: MatrixSource,
    pub b: MatrixSource,
    pub nu: f64,
    pub v: MatrixSource,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlConfig {
    #[serde(default)]
    pub r_f: f64,
    pub sigma: MatrixSource,
    pub w: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
    pub p: MatrixSource,
    pub v: Vec<f64>,
    pub omega: MatrixSource,
}

/// A parsed config together with its location and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn matrix(&self, m: &MatrixSource, field: &str) -> Result<DMatrix<f64>> {
        match m {
            MatrixSource::Inline(rows) => inline_matrix(rows, field),
            MatrixSource::Csv { csv } => read_matrix(&self.resolve(csv)),
        }
    }

    pub fn panel(&self, src: &CsvSource) -> Result<Panel> {
        let (path, resample) = match src {
            CsvSource::Path(p) => (p, None),
            CsvSource::Spec { path, resample } => (path, *resample),
        };
        let panel = read_panel(&self.resolve(path))?;
        match resample {
            Some(Resample::Quarterly) => panel.quarterly(),
            None => Ok(panel),
        }
    }
}

pub fn inline_matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CliError::config(
            format!("{field}[{i}]"),
            format!("row has {} entries, expected {ncols}", rows[i].len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> MatrixSource {
    MatrixSource::Inline(m.row_iter().map(|r| r.iter().copied().collect()).collect())
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { what.to_string() } else { path };
        CliError::config(path, e.into_inner().to_string())
    })
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = parse(&text, "(root)")?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base, sha256: sha256_hex(text.as_bytes()) })
}

/// A standalone parameter file as written by the estimation commands.
pub fn load_theta_file(path: &Path) -> Result<ThetaConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, "(root)").map_err(|e| match e {
        CliError::Config { path: field, message } => {
            CliError::config(format!("{}: {field}", path.display()), message)
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_name_the_field_path() {
        let text = r#"{"views": [{"kind": "macro_state", "time": 1, "select": 0, "value": 1.0},
                                 {"kind": "macro_stat", "time": 1, "select": 0, "value": 1.0}]}"#;
        match parse::<RunConfig>(text, "(root)") {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "views[1].kind"),
            other => panic!("{other:?}"),
        }
        match parse::<RunConfig>(r#"{"horizon": 3, "colour": 1}"#, "(root)") {
            Err(CliError::Config { message, .. }) => assert!(message.contains("colour")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn selectors_and_schedules_parse() {
        let text = r#"{"market": {"beta": [[1.0], [0.5]], "residual_cov": [[[0.1, 0.0], [0.0, 0.1]]],
                       "tau": 0.1, "phi": "constant"},
                       "views": [{"kind": "factor_return", "time": 0, "select": {"mkt": 1.0}, "value": 0.0},
                                 {"kind": "factor_return", "time": 0, "select": "mkt", "value": 0.0}]}"#;
        let cfg: RunConfig = parse(text, "(root)").unwrap();
        let m = cfg.market.unwrap();
        assert!(matches!(m.beta, Schedule::Constant(MatrixSource::Inline(_))));
        assert!(matches!(m.residual_cov, Schedule::PerStep(ref v) if v.len() == 1));
        assert!(matches!(cfg.views[0].select, Selector::Weights(_)));
        assert!(matches!(cfg.views[1].select, Selector::Name(_)));
    }

    #[test]
    fn ragged_inline_matrix_is_rejected() {
        let err = inline_matrix(&[vec![1.0, 2.0], vec![3.0]], "model.inline.a").unwrap_err();
        assert!(matches!(err, CliError::Config { path, .. } if path == "model.inline.a[1]"));
    }
}
