//! Experiment reports: per-replication records, named checks, a free-form
//! summary, and their CSV/JSON serialisation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::{Format, Kind};
use crate::error::LabError;
use crate::format::{joined, sig12};

pub const CSV_HEADER: [&str; 12] = [
    "kind",
    "N",
    "n",
    "s",
    "replication",
    "mu",
    "mu_over_N",
    "E_mu_exact",
    "theory_value",
    "statistic",
    "bound",
    "seed",
];

/// One replication at one schedule point.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: Kind,
    pub boxes: usize,
    pub n: Vec<u64>,
    pub s: Vec<u64>,
    pub replication: u64,
    pub mu: u64,
    pub e_mu_exact: f64,
    pub theory_value: f64,
    pub statistic: f64,
    pub bound: f64,
    pub seed: u64,
}

impl Record {
    pub fn mu_over_n(&self) -> f64 {
        self.mu as f64 / self.boxes as f64
    }

    fn fields(&self) -> [String; 12] {
        [
            self.kind.as_str().to_string(),
            self.boxes.to_string(),
            joined(&self.n),
            joined(&self.s),
            self.replication.to_string(),
            self.mu.to_string(),
            sig12(self.mu_over_n()),
            sig12(self.e_mu_exact),
            sig12(self.theory_value),
            sig12(self.statistic),
            sig12(self.bound),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Less,
    LessEq,
    Greater,
    /// `|value - reference| <= tolerance`.
    Within,
    /// `|value - reference| > tolerance`.
    Differs,
    Decreasing,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Less => "<",
            Relation::LessEq => "<=",
            Relation::Greater => ">",
            Relation::Within => "~=",
            Relation::Differs => "!=",
            Relation::Decreasing => "decreasing",
        }
    }
}

/// A named comparison with its verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn less(name: impl Into<String>, value: f64, reference: f64) -> Self {
        Self::make(name, value, Relation::Less, reference, 0.0, value < reference)
    }

    pub fn at_most(name: impl Into<String>, value: f64, reference: f64) -> Self {
        Self::make(name, value, Relation::LessEq, reference, 0.0, value <= reference)
    }

    pub fn greater(name: impl Into<String>, value: f64, reference: f64) -> Self {
        Self::make(name, value, Relation::Greater, reference, 0.0, value > reference)
    }

    pub fn within(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (value - reference).abs() <= tolerance;
        Self::make(name, value, Relation::Within, reference, tolerance, pass)
    }

    pub fn differs(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (value - reference).abs() > tolerance;
        Self::make(name, value, Relation::Differs, reference, tolerance, pass)
    }

    /// `values` strictly decreasing; `value` is the last entry and
    /// `reference` the first.
    pub fn decreasing(name: impl Into<String>, values: &[f64]) -> Self {
        let pass = values.windows(2).all(|w| w[1] < w[0]);
        let first = values.first().copied().unwrap_or(f64::NAN);
        let last = values.last().copied().unwrap_or(f64::NAN);
        Self::make(name, last, Relation::Decreasing, first, 0.0, pass)
    }

    fn make(name: impl Into<String>, value: f64, relation: Relation, reference: f64, tolerance: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            relation,
            reference,
            tolerance,
            pass,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "check": self.name,
            "value": num(self.value),
            "relation": self.relation.symbol(),
            "reference": num(self.reference),
            "tolerance": num(self.tolerance),
            "pass": self.pass,
        })
    }
}

/// A schedule point that could not be run.
#[derive(Debug, Clone, PartialEq)]
pub struct PointError {
    pub boxes: usize,
    pub n: Vec<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: Kind,
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub records: Vec<Record>,
    pub checks: Vec<Check>,
    /// Kind-specific values, already rounded to 12 significant digits.
    pub summary: Map<String, Value>,
    pub errors: Vec<PointError>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(kind: Kind, config_hash: String, master_seed: u64) -> Self {
        ExperimentReport {
            kind,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            master_seed,
            records: Vec::new(),
            checks: Vec::new(),
            summary: Map::new(),
            errors: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name_prefix: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name.starts_with(name_prefix))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, LabError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record(r.fields())?;
        }
        w.into_inner()
            .map_err(|e| LabError::Runtime(format!("csv buffer: {}", e.error())))
    }

    pub fn to_json(&self) -> Value {
        let errors: Vec<Value> = self
            .errors
            .iter()
            .map(|e| json!({"N": e.boxes, "n": e.n, "error": e.message}))
            .collect();
        json!({
            "kind": self.kind.as_str(),
            "version": self.version,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "records": self.records.len(),
            "passed": self.passed(),
            "summary": Value::Object(self.summary.clone()),
            "checks": self.checks.iter().map(Check::to_json).collect::<Vec<_>>(),
            "errors": errors,
            "notes": self.notes,
        })
    }

    /// Human-readable check table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} report: {} records, config {}\n",
            self.kind.as_str(),
            self.records.len(),
            &self.config_hash[..self.config_hash.len().min(12)]
        ));
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        for e in &self.errors {
            out.push_str(&format!("error at N={} n={}: {}\n", e.boxes, joined(&e.n), e.message));
        }
        for c in &self.checks {
            let tol = if c.tolerance > 0.0 {
                format!(" (tol {})", sig12(c.tolerance))
            } else {
                String::new()
            };
            out.push_str(&format!(
                "[{}] {}: {} {} {}{}\n",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                sig12(c.value),
                c.relation.symbol(),
                sig12(c.reference),
                tol
            ));
        }
        out
    }
}

/// A JSON number rounded to 12 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = sig12(x).parse().expect("sig12 output parses");
    json!(rounded)
}

/// Output paths for `base`: the CSV keeps `base` when it ends in `.csv`, the
/// JSON summary takes the `.json` extension.
pub fn output_paths(base: &Path) -> (PathBuf, PathBuf) {
    let csv = if base.extension().is_some_and(|e| e == "csv") {
        base.to_path_buf()
    } else {
        base.with_extension("csv")
    };
    (csv, base.with_extension("json"))
}

/// Writes the CSV records and/or the JSON summary; returns the paths written.
pub fn emit_report(report: &ExperimentReport, base: &Path, format: Format) -> Result<Vec<PathBuf>, LabError> {
    let (csv_path, json_path) = output_paths(base);
    let mut written = Vec::new();
    if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(LabError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "directory does not exist")));
        }
    }
    if matches!(format, Format::Csv | Format::Both) {
        fs::write(&csv_path, report.to_csv()?).map_err(|e| LabError::io(&csv_path, e))?;
        written.push(csv_path);
    }
    if matches!(format, Format::Json | Format::Both) {
        let mut f = fs::File::create(&json_path).map_err(|e| LabError::io(&json_path, e))?;
        let text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
        writeln!(f, "{text}").map_err(|e| LabError::io(&json_path, e))?;
        written.push(json_path);
    }
    Ok(written)
}
