//! CSV panels: one row per period, period label in the first column, blank
//! cells for missing values.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use condgen::gaussdlm::ObservationPanel;
use nalgebra::DMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Period {
    Index(i64),
    Date(NaiveDate),
}

impl Period {
    fn parse(s: &str) -> Option<Self> {
        if let Ok(i) = s.parse::<i64>() {
            return Some(Self::Index(i));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .or_else(|_| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d"))
            .ok()
            .map(Self::Date)
    }

    fn same_kind(&self, other: &Self) -> bool {
        matches!((self, other), (Self::Index(_), Self::Index(_)) | (Self::Date(_), Self::Date(_)))
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Index(i) => write!(f, "{i}"),
            Self::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

/// A time-indexed table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub file: PathBuf,
    pub period_label: String,
    pub periods: Vec<Period>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// The named columns in the given order.
    pub fn select(&self, names: &[String]) -> Result<Panel> {
        let mut idx = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for n in names {
            match self.columns.iter().position(|c| c == n) {
                Some(i) => idx.push(i),
                None => missing.push(n.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(CliError::SchemaMismatch {
                file: self.file.clone(),
                message: format!("missing column(s) {}", missing.join(", ")),
            });
        }
        Ok(Panel {
            file: self.file.clone(),
            period_label: self.period_label.clone(),
            periods: self.periods.clone(),
            columns: names.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    /// Keeps the rows dated in the last month of each calendar quarter.
    pub fn quarterly(&self) -> Result<Panel> {
        let mut out = Panel { periods: Vec::new(), rows: Vec::new(), ..self.clone() };
        for (p, r) in self.periods.iter().zip(&self.rows) {
            match p {
                Period::Date(d) if d.month() % 3 == 0 => {
                    out.periods.push(*p);
                    out.rows.push(r.clone());
                }
                Period::Date(_) => {}
                Period::Index(_) => {
                    return Err(CliError::SchemaMismatch {
                        file: self.file.clone(),
                        message: "quarterly resampling needs ISO-8601 dates in the period column".into(),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn observations(&self) -> ObservationPanel {
        ObservationPanel::from_options(&self.rows).expect("rows share the header width")
    }

    /// Rows with every value present; a missing cell is a schema error.
    pub fn complete_rows(&self) -> Result<Vec<nalgebra::DVector<f64>>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(t, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v.ok_or_else(|| CliError::Parse {
                            file: self.file.clone(),
                            row: t + 2,
                            column: j + 2,
                            message: format!("{} is missing but this step needs complete data", self.columns[j]),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
                    .map(nalgebra::DVector::from_vec)
            })
            .collect()
    }
}

fn open(path: &Path, headers: bool) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(headers).flexible(true).trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    CliError::Parse { file: path.into(), row, column: 0, message: e.to_string() }
}

fn number(path: &Path, cell: &str, row: usize, column: usize) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| CliError::Parse {
        file: path.into(),
        row,
        column,
        message: format!("cannot parse {cell:?} as a number"),
    })
}

/// Reads a panel. Rows and columns in errors are 1-based file positions,
/// with the header on row 1.
pub fn read_panel(path: &Path) -> Result<Panel> {
    let mut reader = open(path, true)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() {
        return Err(CliError::SchemaMismatch { file: path.into(), message: "empty header".into() });
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(dup) = columns.iter().enumerate().find(|(i, c)| columns[..*i].contains(c)) {
        return Err(CliError::SchemaMismatch { file: path.into(), message: format!("duplicate column {}", dup.1) });
    }
    let mut panel = Panel {
        file: path.into(),
        period_label: header[0].to_string(),
        periods: Vec::new(),
        columns,
        rows: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = i + 2;
        if record.len() != header.len() {
            return Err(CliError::Parse {
                file: path.into(),
                row,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let period = Period::parse(&record[0]).ok_or_else(|| CliError::Parse {
            file: path.into(),
            row,
            column: 1,
            message: format!("period {:?} is neither an integer nor an ISO-8601 date", &record[0]),
        })?;
        if let Some(prev) = panel.periods.last() {
            if !prev.same_kind(&period) || *prev >= period {
                return Err(CliError::Parse {
                    file: path.into(),
                    row,
                    column: 1,
                    message: format!("period {period} does not follow {prev}"),
                });
            }
        }
        let values = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, cell)| if cell.is_empty() { Ok(None) } else { number(path, cell, row, j + 1).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        panel.periods.push(period);
        panel.rows.push(values);
    }
    Ok(panel)
}

/// Reads a headerless numeric matrix, one CSV row per matrix row.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = open(path, false)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let values = record.iter().enumerate().map(|(j, c)| number(path, c, i + 1, j + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(CliError::Parse {
                    file: path.into(),
                    row: i + 1,
                    column: values.len().min(first.len()) + 1,
                    message: format!("expected {} values, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push(values);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Fixed 17-significant-digit rendering used for every numeric output.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a panel in the dialect [`read_panel`] accepts.
pub fn write_panel(path: &Path, panel: &Panel) -> Result<()> {
    std::fs::write(path, render_panel(panel)).map_err(|e| CliError::io(path, e))
}

pub fn render_panel(panel: &Panel) -> String {
    let mut out = String::new();
    out.push_str(&panel.period_label);
    for c in &panel.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (p, r) in panel.periods.iter().zip(&panel.rows) {
        out.push_str(&p.to_string());
        for v in r {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&fmt_num(*v));
            }
        }
        out.push('\n');
    }
    out
}
