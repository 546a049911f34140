//! Report schema and serialization.

use std::collections::BTreeMap;
use std::path::Path;

use localinv_core::suite::{Check, ProblemRecord, Table};
use localinv_core::tolerances as core_tol;
use serde::{Serialize, Serializer};

use crate::config::{RunConfig, Tolerances};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A float that serializes non-finite values as strings instead of `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: Tool,
    pub config: RunConfig,
    pub seed: u64,
    pub tolerances: ToleranceSet,
    pub summary: Summary,
    pub problems: Vec<ProblemEntry>,
    pub checks: Vec<CheckEntry>,
    pub tables: Vec<TableEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

/// Thresholds in force: the configurable check tolerances and the fixed library constants.
#[derive(Debug, Clone, Serialize)]
pub struct ToleranceSet {
    pub checks: Tolerances,
    pub library: BTreeMap<&'static str, Num>,
}

impl ToleranceSet {
    pub fn new(checks: Tolerances) -> Self {
        let library = [
            ("cluster_rel", core_tol::CLUSTER_REL),
            ("dd_floor", core_tol::DD_FLOOR),
            ("fp_tol", core_tol::FP_TOL),
            ("hl_floor", core_tol::HL_FLOOR),
            ("inv_tol", core_tol::INV_TOL),
            ("lip_tol", core_tol::LIP_TOL),
            ("residual_floor", core_tol::RESIDUAL_FLOOR),
            ("richardson_tol", core_tol::RICHARDSON_TOL),
            ("sigma_min_rel", core_tol::SIGMA_MIN_REL),
            ("strong_margin", core_tol::STRONG_MARGIN),
            ("tol_zero", core_tol::TOL_ZERO),
            ("uniform_ratio", core_tol::UNIFORM_RATIO),
        ]
        .into_iter()
        .map(|(k, v)| (k, Num(v)))
        .collect();
        ToleranceSet { checks, library }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEntry {
    pub name: String,
    pub summary: String,
    pub tags: Vec<&'static str>,
    pub params: BTreeMap<String, Num>,
}

impl From<&ProblemRecord> for ProblemEntry {
    fn from(r: &ProblemRecord) -> Self {
        ProblemEntry {
            name: r.name.clone(),
            summary: r.summary.clone(),
            tags: r.tags.iter().map(|t| t.label()).collect(),
            params: r.params.iter().map(|(k, v)| (k.clone(), Num(*v))).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub problem: String,
    pub task: &'static str,
    pub passed: bool,
    /// What the reference values came from.
    pub oracle_kind: &'static str,
    pub measured: BTreeMap<String, Num>,
    pub oracle: BTreeMap<String, Num>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckEntry {
    pub fn new(problem: &str, check: &Check) -> Self {
        let task = check
            .name
            .split('/')
            .nth(1)
            .and_then(localinv_core::suite::Task::parse)
            .map_or("", |t| t.label());
        let map = |xs: &[(String, f64)]| xs.iter().map(|(k, v)| (k.clone(), Num(*v))).collect();
        CheckEntry {
            name: check.name.clone(),
            problem: problem.to_string(),
            task,
            passed: check.passed,
            oracle_kind: check.oracle_kind.label(),
            measured: map(&check.measured),
            oracle: map(&check.oracle),
            note: check.note.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableEntry {
    pub name: String,
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&CheckEntry> {
        self.checks
            .binary_search_by(|c| c.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.checks[i])
    }
}

/// Shortest round-trip form; non-finite values as `NaN`, `inf`, `-inf`.
fn csv_number(x: f64) -> String {
    match serde_json::to_value(Num(x)).expect("number serializes") {
        serde_json::Value::String(s) => s,
        v => v.to_string(),
    }
}

/// Render a table as CSV with a header row.
pub fn table_csv(table: &Table) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header).map_err(CliError::csv)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| csv_number(x)))
            .map_err(CliError::csv)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Write `report.json` and `tables/*.csv` under `dir`.
pub fn write_outputs(dir: &Path, report: &Report, tables: &[Table]) -> Result<(), CliError> {
    let table_dir = dir.join("tables");
    std::fs::create_dir_all(&table_dir)?;
    for t in tables {
        std::fs::write(table_dir.join(format!("{}.csv", t.name)), table_csv(t)?)?;
    }
    std::fs::write(dir.join("report.json"), report.to_json())?;
    Ok(())
}
