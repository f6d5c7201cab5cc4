use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::jobs::Job;

pub const TOOL: &str = "smd";
pub const PRNG: &str = "ChaCha20, one stream per (seed, replica, purpose)";

/// Writes a header row then one row per record. Floats use the shortest
/// representation that reads back to the same value.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to regenerate a CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub output: String,
    pub prng: String,
    #[serde(default)]
    pub notes: Vec<String>,
    pub job: Job,
}

impl Sidecar {
    pub fn new(job: Job, output: &Path, notes: Vec<String>) -> Self {
        Sidecar {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: job.command().into(),
            output: output.display().to_string(),
            prng: PRNG.into(),
            notes,
            job,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let s: Sidecar = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if s.tool != TOOL {
            return Err(CliError::usage(format!(
                "{} was not written by {TOOL}",
                path.display()
            )));
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = toml::to_string(self)
            .map_err(|e| CliError::usage(format!("serializing metadata: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// `<out>.meta.toml`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}
