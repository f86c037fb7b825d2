//! Report assembly, run manifests and atomic output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use subheat::tolerances::Tolerances;
use subheat::{Error, Result};

/// Recorded in every report. Wall-clock time lives in a sidecar file named by `wall_clock`,
/// so that reruns of the same manifest produce byte-identical reports.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub system: String,
    pub system_source: String,
    pub group_source: Option<String>,
    pub seed: u64,
    pub samples: Option<usize>,
    pub tolerances: Tolerances,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_clock: String,
    pub oracles: BTreeMap<String, String>,
}

/// An RFC 4180 table.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        let io = |e: csv::Error| Error::numerical(format!("csv encoding failed: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::numerical(format!("csv encoding failed: {e}")))
    }
}

/// Shortest round-trip decimal, switching to exponent form outside `[1e-5, 1e16)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn nums(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| num(*x))
}

/// Coordinate headers `x1..xn`.
pub fn coords(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// What a subcommand produced.
pub struct Outcome {
    pub report: Value,
    /// `(suffix, table)`; the file is `<stem>.csv` for an empty suffix, else `<stem>-<suffix>.csv`.
    pub tables: Vec<(String, Table)>,
    pub summary: Vec<String>,
    /// Failed properties with their witnesses; non-empty means exit code 4.
    pub violations: Vec<String>,
    pub oracles: BTreeMap<String, String>,
}

impl Outcome {
    pub fn new<T: Serialize>(report: &T) -> Result<Self> {
        Ok(Outcome {
            report: serde_json::to_value(report)?,
            tables: Vec::new(),
            summary: Vec::new(),
            violations: Vec::new(),
            oracles: BTreeMap::new(),
        })
    }

    pub fn table(mut self, suffix: &str, t: Table) -> Self {
        self.tables.push((suffix.to_string(), t));
        self
    }

    pub fn oracle(&mut self, name: &str, version: &str) {
        self.oracles.insert(name.to_string(), version.to_string());
    }

    pub fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.violations.push(what.into());
        }
    }
}

/// Writes every file to a temporary name first and renames only once all writes succeeded.
pub fn write_all_atomic(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let pid = std::process::id();
    let mut staged = Vec::new();
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.{pid}.tmp"));
        if let Err(e) = fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e.into());
        }
        staged.push((tmp, dir.join(name)));
    }
    let mut done = Vec::new();
    for (tmp, dst) in staged {
        fs::rename(&tmp, &dst)?;
        done.push(dst);
    }
    Ok(done)
}

/// Report JSON with the manifest inserted under `manifest`.
pub fn render(manifest: &Manifest, report: &Value) -> Result<Vec<u8>> {
    let mut obj = match report {
        Value::Object(m) => m.clone(),
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other.clone());
            m
        }
    };
    obj.insert("manifest".into(), serde_json::to_value(manifest)?);
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(obj))?;
    bytes.push(b'\n');
    Ok(bytes)
}
