use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::error::Result;
use crate::estimators::{append_records, ResultRecord};
use crate::harness::config::{Experiment, RunConfig};
use crate::harness::fmt_f64;

/// A named pass/fail outcome with a short numeric explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// A CSV table held as formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }
}

/// Cell helpers for table rows.
pub(crate) fn num(x: f64) -> String {
    fmt_f64(x)
}

pub(crate) fn nums(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| fmt_f64(*x)).collect()
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub records: Vec<ResultRecord>,
    pub elapsed: Duration,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Writes `<table>.csv` for every table, `checks.csv`, `results.csv`,
/// `config.toml` and `manifest.txt` into `dir`, replacing earlier files.
/// Only the manifest carries run-dependent data (timestamp, runtime).
pub fn write_report(cfg: &RunConfig, report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(format!("{}.csv", t.name));
        t.write_csv(std::io::BufWriter::new(fs::File::create(&path)?))?;
        written.push(path);
    }

    let path = dir.join("checks.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "check,passed,detail")?;
    for c in &report.checks {
        writeln!(w, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"))?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("results.csv");
    if path.exists() {
        fs::remove_file(&path)?;
    }
    append_records(&path, &report.records)?;
    written.push(path);

    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml())?;
    written.push(path);

    let path = dir.join("manifest.txt");
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut m = String::new();
    m += &format!("experiment = {}\n", report.experiment);
    m += &format!("config_hash = {}\n", cfg.hash());
    m += &format!("seed = {}\n", cfg.solver.seed);
    m += &format!("model = {}\n", cfg.model.name);
    m += &format!("version = {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    m += &format!("checks_passed = {}/{}\n", report.checks.iter().filter(|c| c.passed).count(), report.checks.len());
    m += &format!("status = {}\n", if report.passed() { "pass" } else { "fail" });
    m += &format!("runtime_seconds = {:.3}\n", report.elapsed.as_secs_f64());
    m += &format!("timestamp_unix = {stamp}\n");
    fs::write(&path, m)?;
    written.push(path);
    Ok(written)
}
