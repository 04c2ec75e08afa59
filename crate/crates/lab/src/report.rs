//! Reports and their CSV/JSON files.

use crate::config::ModelSpec;
use crate::error::LabError;
use collapse_core::asymptotics::DecayFit;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Version of the `report.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    /// CSV text; reals carry 17 significant digits.
    pub fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) => x.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        if x.is_nan() {
            Cell::Missing
        } else {
            Cell::Num(x)
        }
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::from)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// One CSV file. The last column is always `error`, empty on success.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        let mut columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        columns.push("error".into());
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, mut cells: Vec<Cell>) {
        assert_eq!(
            cells.len() + 1,
            self.columns.len(),
            "row width of table {}",
            self.name
        );
        cells.push(Cell::Text(String::new()));
        self.rows.push(cells);
    }

    /// A row whose computation failed: the leading key cells, blanks, and the message.
    pub fn push_error(&mut self, key: Vec<Cell>, message: String) {
        let mut cells = key;
        cells.resize(self.columns.len() - 1, Cell::Missing);
        cells.push(Cell::Text(message));
        self.rows.push(cells);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].as_f64()).collect())
    }

    /// Pairs of two numeric columns, skipping rows where either is missing.
    pub fn pairs(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        let (Some(a), Some(b)) = (self.column(x), self.column(y)) else {
            return Vec::new();
        };
        a.into_iter()
            .zip(b)
            .filter_map(|(u, v)| Some((u?, v?)))
            .collect()
    }

    pub fn failed_rows(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| !matches!(r.last(), Some(Cell::Text(s)) if s.is_empty()))
            .count()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, LabError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| LabError::Io(e.into_error()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// `measured <= bound[0]`
    Le,
    /// `measured >= bound[0]`
    Ge,
    /// `bound[0] <= measured <= bound[1]`
    Within,
}

/// A PASS/FAIL judgement with the bound it was tested against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub measured: Option<f64>,
    pub comparator: Comparator,
    pub bound: Vec<f64>,
    /// Config field the bound came from.
    pub bound_source: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Verdict {
    fn make(
        name: &str,
        measured: Option<f64>,
        comparator: Comparator,
        bound: Vec<f64>,
        source: &str,
    ) -> Self {
        let pass = match (measured, comparator) {
            (Some(m), Comparator::Le) => m <= bound[0],
            (Some(m), Comparator::Ge) => m >= bound[0],
            (Some(m), Comparator::Within) => bound[0] <= m && m <= bound[1],
            (None, _) => false,
        };
        Self {
            name: name.into(),
            measured,
            comparator,
            bound,
            bound_source: source.into(),
            pass,
            note: String::new(),
        }
    }

    pub fn le(name: &str, measured: Option<f64>, bound: f64, source: &str) -> Self {
        Self::make(name, measured, Comparator::Le, vec![bound], source)
    }

    pub fn ge(name: &str, measured: Option<f64>, bound: f64, source: &str) -> Self {
        Self::make(name, measured, Comparator::Ge, vec![bound], source)
    }

    pub fn within(name: &str, measured: Option<f64>, lo: f64, hi: f64, source: &str) -> Self {
        Self::make(name, measured, Comparator::Within, vec![lo, hi], source)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub model: Option<ModelSpec>,
    /// The parameters as used, defaults filled in.
    pub params: serde_json::Value,
    pub tables: Vec<Table>,
    pub fits: BTreeMap<String, DecayFit>,
    pub verdicts: Vec<Verdict>,
    /// Structured output that does not fit a table (pseudo-group dumps, fit details).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
    /// Wall-clock seconds; the only field that changes between identical runs.
    pub wall_time_s: f64,
}

impl Report {
    pub fn new(
        experiment: &str,
        seed: u64,
        model: Option<ModelSpec>,
        params: serde_json::Value,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: experiment.into(),
            seed,
            model,
            params,
            tables: Vec::new(),
            fits: BTreeMap::new(),
            verdicts: Vec::new(),
            extra: serde_json::Value::Null,
            wall_time_s: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> Result<String, LabError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for v in &self.verdicts {
            let m = v.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
            let _ = writeln!(
                s,
                "{} {}/{}: measured {} {:?} {:?} ({})",
                if v.pass { "PASS" } else { "FAIL" },
                self.experiment,
                v.name,
                m,
                v.comparator,
                v.bound,
                v.bound_source
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Write `report.json` and/or one CSV per table into `dir`.
pub fn emit(report: &Report, dir: &Path, formats: &[Format]) -> Result<(), LabError> {
    std::fs::create_dir_all(dir)?;
    if formats.contains(&Format::Csv) {
        for t in &report.tables {
            std::fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv()?)?;
        }
    }
    if formats.contains(&Format::Json) {
        std::fs::write(dir.join("report.json"), report.to_json()?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new("x", &["r", "value"]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "r,value,error\n"
        );
    }

    #[test]
    fn reals_keep_seventeen_digits() {
        let mut t = Table::new("x", &["v"]);
        t.push(vec![Cell::from(0.1)]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "1.0000000000000001e-1,");
        let back: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(back.to_bits(), 0.1f64.to_bits());
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut r = Report::new(
            "curvature-decay",
            5,
            Some(ModelSpec::taub_nut()),
            serde_json::json!({"radii": [1.0, 2.0]}),
        );
        let mut t = Table::new("curvature", &["r", "rm", "k"]);
        t.push(vec![
            Cell::from(10.0),
            Cell::from(1.25e-3),
            Cell::from(3i64),
        ]);
        t.push_error(vec![Cell::from(20.0)], "point outside chart".into());
        r.tables.push(t);
        r.verdicts.push(Verdict::within(
            "exponent",
            Some(-3.01),
            -3.2,
            -2.8,
            "params.exponent_tol",
        ));
        r.verdicts
            .push(Verdict::le("residual", None, 0.1, "params.max_residual"));
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(!r.passed());
        assert_eq!(r.tables[0].failed_rows(), 1);
        assert_eq!(r.tables[0].pairs("r", "rm"), vec![(10.0, 1.25e-3)]);
    }
}
