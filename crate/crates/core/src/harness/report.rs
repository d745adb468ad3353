//! Experiment reports, their on-disk form and the replay of verdicts.
//!
//! A report directory holds `config.json`, one CSV per table, `report.json`
//! and finally `manifest.json` with the SHA-256 of every other file. Files
//! are written to temporary names and renamed; the manifest is renamed
//! last, so an interrupted write never leaves a manifest behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::chi_square_two_sample;
use crate::error::{Error, Result};
use crate::walk::cache::sha256_hex;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const CONFIG: &str = "config.json";

/// Named columns of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidConfig(format!("table {} has no column {name}", self.name)))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let bad = |e: csv::Error| Error::InvalidConfig(format!("table {name}: {e}"));
        let columns: Vec<String> = reader.headers().map_err(bad)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(bad)?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::InvalidConfig(format!("table {name}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { name: name.into(), columns, rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Bound {
    AtMost { value: f64 },
    AtLeast { value: f64 },
    Between { lo: f64, hi: f64 },
}

impl Bound {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Bound::AtMost { value } => x <= value,
            Bound::AtLeast { value } => x >= value,
            Bound::Between { lo, hi } => (lo..=hi).contains(&x),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::AtMost { value } => write!(f, "<= {value}"),
            Bound::AtLeast { value } => write!(f, ">= {value}"),
            Bound::Between { lo, hi } => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

/// How a statistic is recomputed from stored tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Source {
    /// `max |a - b|` over the rows of `table`, for each column pair.
    SupAbsDiff { table: String, pairs: Vec<(String, String)> },
    /// `max |a / b - 1|` over rows.
    SupRelDiff { table: String, a: String, b: String },
    /// One cell.
    Cell { table: String, column: String, row: usize },
    /// Ratio of two cells in the same row.
    CellRatio { table: String, num: String, den: String, row: usize },
    /// `|a - b|` for two cells in the same row.
    CellGap { table: String, a: String, b: String, row: usize },
    /// `max (|a - b| - allowance)` over rows.
    GapBeyond { table: String, a: String, b: String, allowance: String },
    /// KS distance between a step CDF with values `empirical` at its jumps
    /// and a continuous CDF `reference` given at the same points.
    KsSteps { table: String, empirical: String, reference: String },
    /// p-value of the two-sample chi-square between two count columns.
    ChiSquareP { table: String, a: String, b: String, min_expected: f64 },
}

impl Source {
    pub fn evaluate(&self, tables: &BTreeMap<String, Table>) -> Result<f64> {
        let get = |name: &str| {
            tables.get(name).ok_or_else(|| Error::DependencyMissing(format!("table {name}")))
        };
        let cell = |t: &Table, c: &str, row: usize| -> Result<f64> {
            t.column(c)?
                .get(row)
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("table {} has no row {row}", t.name)))
        };
        match self {
            Source::SupAbsDiff { table, pairs } => {
                let t = get(table)?;
                let mut d: f64 = 0.0;
                for (a, b) in pairs {
                    for (x, y) in t.column(a)?.iter().zip(t.column(b)?) {
                        d = d.max((x - y).abs());
                    }
                }
                Ok(d)
            }
            Source::SupRelDiff { table, a, b } => {
                let t = get(table)?;
                Ok(t.column(a)?.iter().zip(t.column(b)?).map(|(x, y)| (x / y - 1.0).abs()).fold(0.0, f64::max))
            }
            Source::Cell { table, column, row } => cell(get(table)?, column, *row),
            Source::CellRatio { table, num, den, row } => {
                let t = get(table)?;
                Ok(cell(t, num, *row)? / cell(t, den, *row)?)
            }
            Source::CellGap { table, a, b, row } => {
                let t = get(table)?;
                Ok((cell(t, a, *row)? - cell(t, b, *row)?).abs())
            }
            Source::GapBeyond { table, a, b, allowance } => {
                let t = get(table)?;
                let (a, b, c) = (t.column(a)?, t.column(b)?, t.column(allowance)?);
                Ok((0..a.len()).map(|i| (a[i] - b[i]).abs() - c[i]).fold(f64::NEG_INFINITY, f64::max))
            }
            Source::KsSteps { table, empirical, reference } => {
                let t = get(table)?;
                let (f, g) = (t.column(empirical)?, t.column(reference)?);
                let mut d: f64 = 0.0;
                let mut prev = 0.0;
                for (v, r) in f.iter().zip(&g) {
                    d = d.max((v - r).abs()).max((prev - r).abs());
                    prev = *v;
                }
                Ok(d)
            }
            Source::ChiSquareP { table, a, b, min_expected } => {
                let t = get(table)?;
                Ok(chi_square_two_sample(&t.column(a)?, &t.column(b)?, *min_expected)?.p_value)
            }
        }
    }
}

/// A statistic with its configured tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub bound: Bound,
    pub pass: bool,
    pub source: Source,
}

impl Check {
    /// Evaluates `source` on `tables` and compares with `bound`.
    pub fn from_tables(name: impl Into<String>, source: Source, bound: Bound, tables: &[Table]) -> Result<Self> {
        let map: BTreeMap<String, Table> = tables.iter().map(|t| (t.name.clone(), t.clone())).collect();
        let statistic = source.evaluate(&map)?;
        Ok(Self { name: name.into(), statistic, bound, pass: bound.holds(statistic), source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub wall_clock_seconds: f64,
    pub replicas: u64,
    /// Content hashes of every table the experiment read or built.
    pub provenance: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

/// What `report.json` holds: the report without the table bodies and
/// without the wall clock, so that equal runs give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub tables: Vec<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub replicas: u64,
    pub provenance: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub pass: bool,
    pub wall_clock_seconds: f64,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<ManifestEntry> {
    let tmp = dir.join(format!(".{name}.partial"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))?;
    Ok(ManifestEntry { file: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
}

/// Writes the report and returns the manifest path.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    // a stale manifest must not vouch for files about to be replaced
    match fs::remove_file(dir.join(MANIFEST)) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
        _ => {}
    }
    let mut entries = vec![write_atomic(dir, CONFIG, &serde_json::to_vec_pretty(&report.config)?)?];
    for t in &report.tables {
        entries.push(write_atomic(dir, &t.file_name(), t.to_csv().as_bytes())?);
    }
    let stored = StoredReport {
        tables: report.tables.iter().map(|t| t.file_name()).collect(),
        checks: report.checks.clone(),
        pass: report.pass,
        replicas: report.replicas,
        provenance: report.provenance.clone(),
        notes: report.notes.clone(),
    };
    entries.push(write_atomic(dir, REPORT, &serde_json::to_vec_pretty(&stored)?)?);
    let manifest = Manifest { files: entries, pass: report.pass, wall_clock_seconds: report.wall_clock_seconds };
    write_atomic(dir, MANIFEST, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(dir.join(MANIFEST))
}

/// Re-hashes every file listed in the manifest. Returns the problems found
/// (missing files, hash or size mismatches); empty means verified.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    let mut problems = Vec::new();
    for e in &manifest.files {
        match fs::read(dir.join(&e.file)) {
            Ok(bytes) => {
                if bytes.len() as u64 != e.bytes || sha256_hex(&bytes) != e.sha256 {
                    problems.push(format!("{} does not match its hash", e.file));
                }
            }
            Err(_) => problems.push(format!("{} is missing", e.file)),
        }
    }
    Ok(problems)
}

/// Outcome of recomputing stored verdicts from stored tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub checks: Vec<(String, f64, bool)>,
    pub pass: bool,
    /// True when every recomputed statistic and verdict equals the stored one.
    pub consistent: bool,
}

/// Reloads the CSV tables of a verified report directory and recomputes
/// every check from them alone.
pub fn replay_verdicts(dir: &Path) -> Result<Replay> {
    let problems = verify_manifest(dir)?;
    if !problems.is_empty() {
        return Err(Error::DependencyMissing(problems.join("; ")));
    }
    let stored: StoredReport = serde_json::from_slice(&fs::read(dir.join(REPORT))?)?;
    let mut tables = BTreeMap::new();
    for file in &stored.tables {
        let name = file.trim_end_matches(".csv");
        tables.insert(name.to_string(), Table::from_csv(name, &fs::read_to_string(dir.join(file))?)?);
    }
    let mut consistent = true;
    let mut checks = Vec::new();
    for c in &stored.checks {
        let stat = c.source.evaluate(&tables)?;
        let pass = c.bound.holds(stat);
        let same = if c.statistic.is_finite() { stat == c.statistic } else { stat.to_bits() == c.statistic.to_bits() };
        consistent &= same && pass == c.pass;
        checks.push((c.name.clone(), stat, pass));
    }
    let pass = checks.iter().all(|c| c.2);
    consistent &= pass == stored.pass;
    Ok(Replay { checks, pass, consistent })
}
