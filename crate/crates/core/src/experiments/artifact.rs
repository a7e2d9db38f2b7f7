//! Output tables, metadata sidecars and the on-disk artifact layout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ResolvedConfig;
use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // shortest representation that round-trips
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

/// A rectangular table with unit-suffixed column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    /// Column `name` as floats; integer cells are widened.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Int(v) => Some(*v as f64),
                Cell::Float(v) => Some(*v),
                Cell::Text(_) => None,
            })
            .collect()
    }

    /// One header row, comma separated, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Array of row objects keyed by column name.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(|c| json!(c))).collect()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Per-table metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub table: String,
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_s: f64,
}

/// Everything one scenario run produces.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub resolved_toml: String,
    pub wall_time_s: f64,
    pub tables: Vec<Table>,
    /// Named JSON documents such as the fidelity report.
    pub documents: Vec<(String, Value)>,
    /// Headline results: fidelity, R, splittings, tau.
    pub derived: Value,
}

impl RunArtifact {
    pub fn new(scenario: &str, resolved: &ResolvedConfig) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed: resolved.config.seed,
            config_hash: resolved.hash.clone(),
            resolved_toml: resolved.resolved_toml.clone(),
            wall_time_s: 0.0,
            tables: Vec::new(),
            documents: Vec::new(),
            derived: Value::Object(Default::default()),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn derived_f64(&self, key: &str) -> Option<f64> {
        self.derived.get(key)?.as_f64()
    }

    pub fn metadata(&self, table: &str) -> Metadata {
        Metadata {
            table: table.to_string(),
            scenario: self.scenario.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            tool_version: TOOL_VERSION.to_string(),
            wall_time_s: self.wall_time_s,
        }
    }

    /// Writes every table with its `<name>.meta.json` sidecar, the documents, `derived.json`
    /// and the resolved configuration into `dir`. Returns the paths written.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
            Ok(())
        };
        put(RESOLVED_CONFIG_FILE.to_string(), self.resolved_toml.clone())?;
        for t in &self.tables {
            let body = match format {
                OutputFormat::Csv => t.to_csv(),
                OutputFormat::Json => pretty(&t.to_json())?,
            };
            put(format!("{}.{}", t.name, format.extension()), body)?;
            put(format!("{}.meta.json", t.name), pretty(&serde_json::to_value(self.metadata(&t.name))?)?)?;
        }
        for (name, doc) in &self.documents {
            put(format!("{name}.json"), pretty(doc)?)?;
        }
        let mut derived = self.derived.clone();
        if let Value::Object(m) = &mut derived {
            m.insert("metadata".into(), serde_json::to_value(self.metadata("derived"))?);
        }
        put("derived.json".to_string(), pretty(&derived)?)?;
        Ok(written)
    }
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Output directory: the explicit one, else the config's, else `$YBSIM_OUT_DIR/<scenario>`,
/// else `out/<scenario>`.
pub fn output_dir(explicit: Option<&Path>, config_dir: Option<&str>, scenario: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = config_dir {
        return PathBuf::from(p);
    }
    let base = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map_or_else(|| PathBuf::from("out"), PathBuf::from);
    base.join(scenario)
}

pub const OUT_DIR_ENV: &str = "YBSIM_OUT_DIR";

/// Checks that a metadata sidecar's hash matches a re-hash of the stored resolved config.
pub fn verify_config_hash(dir: &Path, table: &str) -> Result<bool> {
    let meta: Metadata = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{table}.meta.json")))?)?;
    let toml = std::fs::read_to_string(dir.join(RESOLVED_CONFIG_FILE))?;
    Ok(super::config::config_hash(&toml) == meta.config_hash)
}

pub(crate) fn float_array(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| json!(x)).collect())
}
