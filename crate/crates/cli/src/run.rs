//! Output bookkeeping shared by all commands: file naming, metadata,
//! the manifest echo and cleanup on failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use shelab::export::{self, Metadata, Table};
use shelab::noise::{RNG_FAMILY, RNG_VERSION};
use shelab::SimConfig;

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub output_dir: String,
    pub n_reps: Option<u64>,
    pub threads: usize,
    pub overrides: Vec<String>,
    pub args: Vec<String>,
    pub config: Option<SimConfig>,
    pub rng_family: &'static str,
    pub rng_version: &'static str,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub started_at: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

pub struct RunContext {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config: Option<SimConfig>,
    pub out_dir: PathBuf,
    pub n_reps: Option<u64>,
    pub threads: usize,
    pub overrides: Vec<String>,
    pub args: Vec<String>,
    stamp: String,
    started_at: String,
    clock: Instant,
    written: Vec<PathBuf>,
}

impl RunContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        config_path: Option<PathBuf>,
        config: Option<SimConfig>,
        out_dir: PathBuf,
        n_reps: Option<u64>,
        threads: usize,
        overrides: Vec<String>,
        args: Vec<String>,
    ) -> Self {
        let now = chrono::Utc::now();
        Self {
            command: command.to_string(),
            config_path,
            config,
            out_dir,
            n_reps,
            threads,
            overrides,
            args,
            stamp: now.format("%Y%m%dT%H%M%S%3fZ").to_string(),
            started_at: now.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            clock: Instant::now(),
            written: Vec::new(),
        }
    }

    pub fn config(&self) -> Result<&SimConfig, CliError> {
        self.config.as_ref().ok_or_else(|| CliError::Config(format!("`{}` needs --config", self.command)))
    }

    pub fn reps(&self, default: u64) -> u64 {
        self.n_reps.unwrap_or(default)
    }

    /// Metadata header for every CSV of this run.
    pub fn metadata(&self) -> Metadata {
        let mut m = match &self.config {
            Some(cfg) => Metadata::for_run(&self.command, cfg),
            None => {
                let mut m = Metadata::default();
                m.push("command", &self.command);
                m.push("rng_family", RNG_FAMILY);
                m.push("rng_version", RNG_VERSION);
                m
            }
        };
        m.push("version", env!("CARGO_PKG_VERSION"));
        if let Some(n) = self.n_reps {
            m.push("n_reps", n);
        }
        m.push("args", self.args.join(" "));
        m
    }

    fn path_for(&self, suffix: &str, ext: &str) -> PathBuf {
        let name = if suffix.is_empty() {
            format!("{}_{}.{ext}", self.command, self.stamp)
        } else {
            format!("{}_{}_{suffix}.{ext}", self.command, self.stamp)
        };
        self.out_dir.join(name)
    }

    pub fn write_csv(&mut self, suffix: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.path_for(suffix, "csv");
        self.written.push(path.clone());
        export::write_csv(&path, &self.metadata(), table)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path_for(suffix, "json");
        self.written.push(path.clone());
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(path)
    }

    pub fn manifest(&self) -> ExperimentManifest {
        ExperimentManifest {
            command: self.command.clone(),
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            output_dir: self.out_dir.display().to_string(),
            n_reps: self.n_reps,
            threads: self.threads,
            overrides: self.overrides.clone(),
            args: self.args.clone(),
            config: self.config.clone(),
            rng_family: RNG_FAMILY,
            rng_version: RNG_VERSION,
            seed: self.config.as_ref().map(|c| c.seed),
            version: env!("CARGO_PKG_VERSION"),
            started_at: self.started_at.clone(),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            outputs: self.written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        }
    }

    pub fn write_manifest(&mut self) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join("manifest.json");
        let manifest = self.manifest();
        self.written.push(path.clone());
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }

    /// Removes every file written so far.
    pub fn remove_outputs(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Checks that `dir` exists (creating it if needed) and is writable.
pub fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output dir {}: {e}", dir.display())))?;
    let probe = dir.join(".shelab-write-check");
    fs::write(&probe, b"").map_err(|e| CliError::Config(format!("output dir {} not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}
