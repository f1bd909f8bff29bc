use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ExperimentKind, ExperimentSpec};
use crate::error::{Error, Result};

pub const CSV_SCHEMA: &str = "gradband-rows/v1";

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn write(&self, out: &mut String) {
        match self {
            Cell::Int(v) => write!(out, "{v}").unwrap(),
            // 17 significant digits round-trip every f64
            Cell::Float(v) => write!(out, "{v:.16e}").unwrap(),
            Cell::Bool(b) => out.push_str(if *b { "1" } else { "0" }),
            Cell::Text(s) => out.push_str(s),
            Cell::Empty => {}
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(v) => Some(v as f64),
            Cell::Float(v) => Some(v),
            Cell::Bool(b) => Some(b as u8 as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        // seeds are written as their two's-complement bit pattern
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// A threshold comparison against an acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

impl Check {
    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value >= min,
            value,
            detail: format!("{value:.6} >= {min}"),
        }
    }

    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value <= max,
            value,
            detail: format!("{value:.6} <= {max}"),
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: (lo..=hi).contains(&value),
            value,
            detail: format!("{value:.6} in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Aggregates, all recomputable from `rows`.
    pub summary: Value,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Numeric values of one column; empty cells are skipped.
    pub fn column_f64(&self, name: &str) -> Vec<f64> {
        let Some(k) = self.column(name) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[k].as_f64()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema={CSV_SCHEMA} kind={}\n", self.kind);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (k, c) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                c.write(&mut out);
            }
            out.push('\n');
        }
        out
    }

    /// `summary.json` body: aggregates plus the checks and overall verdict.
    pub fn summary_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "passed": self.passed(),
            "checks": self.checks,
            "summary": self.summary,
        })
    }
}

/// Writes `rows.csv`, `summary.json` and `manifest.json` into `dir`.
pub fn write_outputs(report: &ExperimentReport, spec: &ExperimentSpec, dir: &Path, jobs: usize, wall: Duration) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("rows.csv", report.to_csv())?;
    write("summary.json", serde_json::to_string_pretty(&report.summary_json())? + "\n")?;
    let manifest = json!({
        "spec": spec,
        "version": env!("CARGO_PKG_VERSION"),
        "csv_schema": CSV_SCHEMA,
        "jobs": jobs,
        "wall_time_seconds": wall.as_secs_f64(),
        "rows": report.rows.len(),
    });
    write("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")
}
