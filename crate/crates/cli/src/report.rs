//! Campaign reports: CSV tables, a JSON metadata file and a text summary.
//!
//! Everything except the `wall_clock` block of `report.json` is a pure
//! function of the configuration, so reruns can be compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::{Command, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    /// 17 significant digits: lossless for `f64`.
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn short(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.6e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
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

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::short).collect()).collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|j| cells.iter().map(|r| r[j].len()).chain([self.header[j].len()]).max().unwrap_or(0))
            .collect();
        let line = |items: &[String]| {
            let padded: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            padded.join("  ")
        };
        let mut s = format!("== {} ==\n{}\n", self.name, line(&self.header));
        for r in &cells {
            s.push_str(&line(r));
            s.push('\n');
        }
        s
    }
}

/// A named invariant and whether the campaign established it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: Command,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    /// Adaptive budgets exhausted somewhere in the campaign.
    pub budget_flags: Vec<String>,
    pub warnings: Vec<String>,
    /// Structured campaign output.
    pub results: Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: Command, config: &RunConfig) -> Self {
        Self {
            command,
            config: config.clone(),
            checks: vec![],
            budget_flags: vec![],
            warnings: vec![],
            results: Value::Null,
            tables: vec![],
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn flag(&mut self, flagged: bool, what: impl Into<String>) {
        if flagged {
            self.budget_flags.push(what.into());
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn passed(&self) -> bool {
        self.failed_checks().next().is_none() && self.budget_flags.is_empty()
    }

    /// `0` iff no check failed and no budget flag was raised.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    /// Structured report; the wall-clock block is kept separate.
    pub fn to_json(&self, elapsed_seconds: Option<f64>) -> Value {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        let tables: Vec<Value> = self
            .tables
            .iter()
            .map(|t| serde_json::json!({ "name": t.name, "file": format!("{}.csv", t.name), "rows": t.rows.len() }))
            .collect();
        v["tables"] = Value::Array(tables);
        v["passed"] = Value::Bool(self.passed());
        if let Some(s) = elapsed_seconds {
            v["wall_clock"] = serde_json::json!({ "elapsed_seconds": s });
        }
        v
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command: {}\n", self.command);
        for t in &self.tables {
            s.push('\n');
            s.push_str(&t.to_text());
        }
        s.push_str("\n== checks ==\n");
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        for f in &self.budget_flags {
            let _ = writeln!(s, "[FLAG] {f}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "[WARN] {w}");
        }
        let _ = writeln!(s, "\nverdict: {}", if self.passed() { "pass" } else { "fail" });
        s
    }

    /// Write `report.json`, `report.txt` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path, elapsed_seconds: f64) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = vec![];
        let mut put = |name: String, body: String| -> io::Result<()> {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
            Ok(())
        };
        for t in &self.tables {
            put(format!("{}.csv", t.name), t.to_csv())?;
        }
        let json = serde_json::to_string_pretty(&self.to_json(Some(elapsed_seconds))).map_err(io::Error::other)?;
        put("report.json".into(), json + "\n")?;
        put("report.txt".into(), self.to_text())?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_numbers_round_trip() {
        let mut t = Table::new("t", &["x", "n", "s"]);
        let x = 0.1 + 0.2;
        t.push(vec![x.into(), 3usize.into(), "ok".into()]);
        let csv = t.to_csv();
        let field = csv.lines().nth(1).unwrap().split(',').next().unwrap();
        assert_eq!(field.parse::<f64>().unwrap(), x);
        assert_eq!(csv.lines().next().unwrap(), "x,n,s");
    }

    #[test]
    fn exit_code_follows_checks_and_flags() {
        let cfg = RunConfig::default();
        let mut r = Report::new(Command::GaugeCheck, &cfg);
        r.check("a", true, "");
        assert_eq!(r.exit_code(), 0);
        r.flag(true, "budget");
        assert_eq!(r.exit_code(), 1);
        let mut r = Report::new(Command::GaugeCheck, &cfg);
        r.check("b", false, "");
        assert_eq!(r.exit_code(), 1);
        assert_eq!(r.failed_checks().count(), 1);
    }

    #[test]
    fn wall_clock_is_the_only_varying_block() {
        let r = Report::new(Command::GaugeCheck, &RunConfig::default());
        let mut a = r.to_json(Some(1.0));
        let mut b = r.to_json(Some(2.0));
        assert_ne!(a, b);
        a.as_object_mut().unwrap().remove("wall_clock");
        b.as_object_mut().unwrap().remove("wall_clock");
        assert_eq!(a, b);
    }
}
