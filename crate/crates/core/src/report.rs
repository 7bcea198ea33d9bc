//! Report tables and their CSV / JSON serialisation.
//!
//! Floats are written as `{:.16e}` (17 significant digits), non-finite values
//! as empty CSV fields and JSON `null`. JSON documents have the shape
//! `{"schema_version": 1, "table": .., "columns": [..], "rows": [{..}, ..]}`
//! with row keys in column order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_float(v: f64) -> Option<String> {
    v.is_finite().then(|| format!("{v:.16e}"))
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v).unwrap_or_default(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v).unwrap_or_else(|| "null".into()),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => serde_json::to_string(s).expect("string serialises"),
            Cell::Missing => "null".into(),
        }
    }
}

/// Rows in a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width does not match the {} columns",
            self.name
        );
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Table) {
        assert_eq!(self.columns, other.columns, "column mismatch");
        self.rows.extend(other.rows);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut out = String::new();
        let columns = serde_json::to_string(&self.columns).expect("columns serialise");
        let name = serde_json::to_string(&self.name).expect("name serialises");
        write!(
            out,
            "{{\n  \"schema_version\": {SCHEMA_VERSION},\n  \"table\": {name},\n  \"columns\": {columns},\n  \"rows\": [\n"
        )
        .unwrap();
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str("    {");
            for (j, (col, cell)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                write!(out, "\"{col}\": {}", cell.json()).unwrap();
            }
            out.push('}');
            if i + 1 < self.rows.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("  ]\n}\n");
        Ok(out)
    }
}

/// Writes `<dir>/<stem>.csv` and/or `<dir>/<stem>.json`. Nothing is written
/// for an empty table.
pub fn emit_report(table: &Table, dir: &Path, stem: &str, format: OutputFormat) -> Result<Vec<PathBuf>> {
    if table.is_empty() {
        return Err(Error::EmptyReport);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut files = Vec::new();
    if format.csv() {
        files.push((dir.join(format!("{stem}.csv")), table.to_csv()?));
    }
    if format.json() {
        files.push((dir.join(format!("{stem}.json")), table.to_json()?));
    }
    for (path, body) in files {
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
