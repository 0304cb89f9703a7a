//! Run reports, input digests and atomic output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, Format, GlobalArgs};

/// Machine-readable record of one run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub solver: String,
    pub version: &'static str,
    /// `sha256:` of every input file, length-prefixed and in argument order.
    pub input_digest: String,
    pub config: Value,
    pub results: Value,
    pub trace: Option<Value>,
    pub duration_seconds: f64,
}

/// What a subcommand produces before it is written out.
pub struct Outcome {
    pub solver: &'static str,
    pub config: Value,
    pub results: Value,
    pub trace: Option<Value>,
    /// Tab-separated table with a header line.
    pub table: String,
    /// Human summary for standard output.
    pub summary: String,
}

/// Reads input files and remembers their bytes for the digest.
#[derive(Default)]
pub struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        Ok(bytes)
    }

    pub fn digest(self) -> String {
        format!("sha256:{}", hex::encode(self.hasher.finalize()))
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Data(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn to_json(value: &impl Serialize) -> Value {
    serde_json::to_value(value).expect("report values serialize")
}

/// Emits the summary, the report and the optional table.
pub fn finish(
    global: &GlobalArgs,
    inputs: Inputs,
    started: Instant,
    outcome: Outcome,
) -> Result<(), CliError> {
    let report = RunReport {
        solver: outcome.solver.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        input_digest: inputs.digest(),
        config: outcome.config,
        results: outcome.results,
        trace: outcome.trace,
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(out) = &global.out {
        let bytes = match global.format {
            Format::Json => {
                let mut b = serde_json::to_vec_pretty(&report).expect("report serializes");
                b.push(b'\n');
                b
            }
            Format::Tsv => outcome.table.clone().into_bytes(),
        };
        write_atomic(out, &bytes)?;
    }
    if let Some(table) = &global.table {
        write_atomic(table, outcome.table.as_bytes())?;
    }
    print!("{}", outcome.summary);
    Ok(())
}
