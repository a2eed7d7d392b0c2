//! Output tables and the run manifest. Everything is rendered in memory and
//! only written once the whole run has succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use condgen::forecast::{ForecastPanel, SeriesForecast, SeriesKind};
use nalgebra::DVector;
use serde::Serialize;

use crate::error::{CliError, Result, Stage};
use crate::ingest::fmt_num;
use crate::resolve::{Catalog, SelectorRecord};

pub const GROUPS: [SeriesKind; 7] = [
    SeriesKind::X,
    SeriesKind::Y,
    SeriesKind::F,
    SeriesKind::MuF,
    SeriesKind::Alpha,
    SeriesKind::Mu,
    SeriesKind::R,
];

#[derive(Debug, Default)]
pub struct Artifacts {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, rel: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.insert(rel.into(), contents.into());
    }

    pub fn names(&self) -> Vec<String> {
        self.files.keys().map(|p| p.to_string_lossy().replace('\\', "/")).collect()
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        for (rel, body) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn table(header: &[String], rows: impl Iterator<Item = (String, DVector<f64>)>) -> String {
    let mut out = String::from("step");
    for h in header {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (label, row) in rows {
        out.push_str(&label);
        for v in row.iter() {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

fn concat(pieces: &[Vec<DVector<f64>>]) -> Vec<DVector<f64>> {
    let steps = pieces.first().map_or(0, Vec::len);
    (0..steps)
        .map(|k| DVector::from_iterator(pieces.iter().map(|p| p[k].len()).sum(), pieces.iter().flat_map(|p| p[k].iter().copied())))
        .collect()
}

fn group_tables(arts: &mut Artifacts, group: &str, header: &[String], parts: &[&SeriesForecast], levels: [f64; 2]) -> Result<()> {
    let mean = concat(&parts.iter().map(|s| s.level_mean()).collect::<Vec<_>>());
    let mut bands = parts.iter().map(|s| s.bands(&levels)).collect::<condgen::Result<Vec<_>>>().stage("bands")?;
    let hi = concat(&bands.iter_mut().map(|b| b.pop().expect("two levels")).collect::<Vec<_>>());
    let lo = concat(&bands.iter_mut().map(|b| b.pop().expect("two levels")).collect::<Vec<_>>());
    let labelled = |rows: Vec<DVector<f64>>| rows.into_iter().enumerate().map(|(k, r)| (k.to_string(), r));
    let dir = Path::new(group);
    arts.add(dir.join("forecast_mean.csv"), table(header, labelled(mean)));
    arts.add(dir.join("forecast_band_lo.csv"), table(header, labelled(lo)));
    arts.add(dir.join("forecast_band_hi.csv"), table(header, labelled(hi)));
    Ok(())
}

/// Mean and band tables for every nonempty core group and for the
/// registered functionals.
pub fn forecast_tables(arts: &mut Artifacts, panel: &ForecastPanel, catalog: &Catalog, levels: [f64; 2]) -> Result<()> {
    for kind in GROUPS {
        let s = panel.core(kind);
        if s.width() > 0 {
            group_tables(arts, kind.name(), catalog.group(kind), &[s], levels)?;
        }
    }
    let functionals: Vec<&SeriesForecast> =
        panel.series.iter().filter(|s| matches!(s.id, condgen::forecast::SeriesId::Functional(_))).collect();
    if !functionals.is_empty() {
        let header: Vec<String> = functionals.iter().map(|s| s.id.name().to_string()).collect();
        group_tables(arts, "functionals", &header, &functionals, levels)?;
    }
    Ok(())
}

fn path_chunks(arts: &mut Artifacts, group: &str, header: &[String], parts: &[&SeriesForecast], chunk: usize) {
    let Some(n_paths) = parts[0].paths.as_ref().map(Vec::len) else { return };
    for (c, start) in (0..n_paths).step_by(chunk).enumerate() {
        let mut out = String::from("path,step");
        for h in header {
            out.push(',');
            out.push_str(h);
        }
        out.push('\n');
        for p in start..(start + chunk).min(n_paths) {
            let steps = parts[0].paths.as_ref().expect("checked above")[p].len();
            for k in 0..steps {
                out.push_str(&format!("{p},{k}"));
                for s in parts {
                    let v = &s.paths.as_ref().expect("all parts carry paths")[p][k];
                    for &x in v.iter() {
                        out.push(',');
                        out.push_str(&fmt_num(if s.exponentiate { x.exp() } else { x }));
                    }
                }
                out.push('\n');
            }
        }
        arts.add(Path::new("paths").join(group).join(format!("chunk_{c:05}.csv")), out);
    }
}

/// Simulated paths, `chunk` paths per file, one file set per group.
pub fn path_tables(arts: &mut Artifacts, panel: &ForecastPanel, catalog: &Catalog, chunk: usize) {
    for kind in GROUPS {
        let s = panel.core(kind);
        if s.width() > 0 {
            path_chunks(arts, kind.name(), catalog.group(kind), &[s], chunk);
        }
    }
    let functionals: Vec<&SeriesForecast> =
        panel.series.iter().filter(|s| matches!(s.id, condgen::forecast::SeriesId::Functional(_))).collect();
    if !functionals.is_empty() {
        let header: Vec<String> = functionals.iter().map(|s| s.id.name().to_string()).collect();
        path_chunks(arts, "functionals", &header, &functionals, chunk);
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub horizon: Option<usize>,
    pub bands: Option<[f64; 2]>,
    pub n_parameter_sets: Option<usize>,
    /// Input file to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub catalog: Option<Catalog>,
    pub selectors: Vec<SelectorRecord>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: Option<String>) -> Self {
        Self {
            tool: "condgen",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config_sha256,
            seed: None,
            n_paths: None,
            horizon: None,
            bands: None,
            n_parameter_sets: None,
            inputs: BTreeMap::new(),
            catalog: None,
            selectors: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.insert(path.to_string_lossy().into_owned(), crate::config::sha256_hex(&bytes));
        Ok(())
    }

    /// Adds the manifest itself to `arts`, listing every other artifact.
    pub fn finish(mut self, arts: &mut Artifacts) {
        self.outputs = arts.names();
        self.outputs.push("run_manifest.json".into());
        let mut body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        body.push('\n');
        arts.add("run_manifest.json", body);
    }
}
