//! CSV output with a `#`-prefixed metadata header.
//!
//! Layout:
//!
//! ```text
//! # key = value            (one line per metadata entry)
//! #> kappa = 1.0           (the run configuration as TOML, one line each)
//! t,x,u                    (column header)
//! 1e0,-5e0,3.2e-2          (body)
//! ```
//!
//! Floats are written in shortest round-trip scientific notation, so equal
//! values always produce equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::model::{ModelError, SimConfig};
use crate::noise::{RNG_FAMILY, RNG_VERSION};

const CONFIG_PREFIX: &str = "#> ";

/// Deterministic float formatting used in every output file.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
    pub config: Option<SimConfig>,
}

impl Metadata {
    /// Metadata carrying the command, the RNG identity, the seed and the
    /// configuration echo.
    pub fn for_run(command: &str, cfg: &SimConfig) -> Self {
        let mut m = Self::default();
        m.push("command", command);
        m.push("rng_family", RNG_FAMILY);
        m.push("rng_version", RNG_VERSION);
        m.push("seed", cfg.seed);
        m.push("clip_negative", cfg.clip_negative);
        m.config = Some(cfg.clone());
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        self.entries.push((key.to_string(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header line plus body, without metadata.
    pub fn body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn render_csv(meta: &Metadata, table: &Table) -> String {
    let mut out = String::new();
    for (k, v) in &meta.entries {
        let _ = writeln!(out, "# {k} = {v}");
    }
    if let Some(cfg) = &meta.config {
        for line in cfg.to_toml_string().lines() {
            let _ = writeln!(out, "{CONFIG_PREFIX}{line}");
        }
    }
    out.push_str(&table.body());
    out
}

pub fn write_csv(path: &Path, meta: &Metadata, table: &Table) -> io::Result<()> {
    fs::write(path, render_csv(meta, table))
}

/// Lines of a rendered file that are not metadata.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).fold(String::new(), |mut acc, l| {
        acc.push_str(l);
        acc.push('\n');
        acc
    })
}

/// `# key = value` entries of a rendered file.
pub fn parse_metadata(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| l.starts_with("# "))
        .filter_map(|l| l[2..].split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// The configuration echoed in a rendered file.
pub fn embedded_config(text: &str) -> Result<SimConfig, ModelError> {
    let toml: String = text
        .lines()
        .filter_map(|l| l.strip_prefix(CONFIG_PREFIX).or_else(|| (l == CONFIG_PREFIX.trim_end()).then_some("")))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        });
    SimConfig::from_toml_str(&toml)
}
