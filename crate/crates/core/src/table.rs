//! Convergence tables as CSV, with the run manifest carried in `#` comment
//! lines ahead of the header.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::{ErrorRow, ExperimentReport};

pub const COLUMNS: [&str; 9] =
    ["scheme", "param_set", "dt_exp", "dt", "error", "ci_low", "ci_high", "paths_used", "paths_rejected"];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub scheme: String,
    pub param_set: String,
    pub dt_exp: u32,
    pub dt: f64,
    pub error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub paths_used: usize,
    pub paths_rejected: usize,
}

impl CsvRow {
    pub fn from_error_row(label: &str, r: &ErrorRow) -> Self {
        Self {
            scheme: r.scheme.to_string(),
            param_set: label.to_string(),
            dt_exp: r.dt_exp,
            dt: r.dt,
            error: r.error,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            paths_used: r.paths_used,
            paths_rejected: r.paths_rejected,
        }
    }

    fn fields(&self) -> [String; 9] {
        // `{}` on f64 prints the shortest string that parses back to the same value
        [
            self.scheme.clone(),
            self.param_set.clone(),
            self.dt_exp.to_string(),
            self.dt.to_string(),
            self.error.to_string(),
            self.ci_low.to_string(),
            self.ci_high.to_string(),
            self.paths_used.to_string(),
            self.paths_rejected.to_string(),
        ]
    }
}

pub fn rows_from_report(report: &ExperimentReport) -> Vec<CsvRow> {
    report.rows().map(|r| CsvRow::from_error_row(&report.label, r)).collect()
}

/// Ordered `key = value` pairs describing how a file was produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn comment_lines(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("# {} = {}\n", k, v.replace(['\n', '\r'], " ")))
            .collect()
    }
}

pub fn write_table(manifest: &Manifest, rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(manifest.comment_lines() + &body)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Reads a table written by [`write_table`]; rejects empty tables and unknown layouts.
pub fn parse_table(text: &str) -> Result<(Manifest, Vec<CsvRow>)> {
    let mut manifest = Manifest::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line[1..].split_once(" = ") {
            manifest.push(k.trim(), v.trim());
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().map(str::trim).ne(COLUMNS.iter().copied()) {
        return Err(Error::Parse(format!("unexpected header '{}'", header.iter().collect::<Vec<_>>().join(","))));
    }
    let rows: Vec<CsvRow> = rdr.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    if rows.is_empty() {
        return Err(Error::Parse("table has no rows".into()));
    }
    for r in &rows {
        r.scheme.parse::<crate::scalar::SchemeId>()?;
        if r.param_set.is_empty() || r.param_set.starts_with('#') || r.param_set.chars().any(char::is_control) {
            return Err(Error::Parse(format!("row for {} has an invalid parameter set label", r.scheme)));
        }
        let finite = [r.dt, r.error, r.ci_low, r.ci_high].iter().all(|v| v.is_finite());
        if !finite || r.dt <= 0.0 || r.error < 0.0 {
            return Err(Error::Parse(format!("row for {} at 2^-{} has invalid numbers", r.scheme, r.dt_exp)));
        }
    }
    Ok((manifest, rows))
}
