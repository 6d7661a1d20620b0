//! Experiment runner behind the `bog-lab` binary.

pub mod commands;
pub mod config;

use commands::{Assertion, Outcome};
use config::ExperimentConfig;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(bog_lab::Error),
    #[error("{module}: {source}")]
    Module { module: &'static str, source: bog_lab::Error },
    #[error("writing {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
}

/// Tags a core error with the module that raised it.
pub trait Within<T> {
    fn within(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Within<T> for bog_lab::Result<T> {
    fn within(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            e @ bog_lab::Error::ConfigInvalid { .. } => CliError::Config(e),
            source => CliError::Module { module, source },
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a ExperimentConfig,
    pub assertions: &'a [Assertion],
}

/// Paths of the artifacts written by one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub passed: bool,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |source| CliError::Write { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn render_csv(outcome: &Outcome) -> String {
    let mut s = String::with_capacity(64 * (outcome.rows.len() + 1));
    s.push_str(&outcome.header);
    s.push('\n');
    for row in &outcome.rows {
        s.push_str(row);
        s.push('\n');
    }
    s
}

/// Runs the configured command and writes `<command>.csv` and
/// `<command>.summary.json` under the output directory.
pub fn run(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let outcome = commands::execute(config)?;
    let name = config.command.name();
    let csv = config.output.join(format!("{name}.csv"));
    let summary_path = config.output.join(format!("{name}.summary.json"));
    write_atomic(&csv, render_csv(&outcome).as_bytes())?;
    let summary = Summary {
        command: name,
        config_hash: config.hash(),
        config,
        assertions: &outcome.assertions,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&summary_path, json.as_bytes())?;
    Ok(Artifacts { csv, summary: summary_path, passed: outcome.assertions.iter().all(|a| a.pass) })
}

/// Caps the global worker pool from `BOG_LAB_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("BOG_LAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(CliError::Config(bog_lab::Error::ConfigInvalid {
                field: "BOG_LAB_THREADS".into(),
                message: format!("`{raw}` is not a positive integer"),
            }))
        }
    };
    #[cfg(feature = "parallel")]
    {
        // a pool built earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}
