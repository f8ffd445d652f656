//! Output plumbing: JSON and CSV emission to stdout or, via a `.partial`
//! staging file, to a final path that only ever appears complete.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

fn partial_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".partial");
    PathBuf::from(os)
}

/// Writes to `<path>.partial` and renames into place, so an interrupted run
/// never leaves a truncated file under the requested name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let staging = partial_path(path);
    fs::write(&staging, bytes)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", staging.display())))?;
    fs::rename(&staging, path).map_err(|e| {
        CliError::runtime(format!(
            "cannot move {} into place: {e}",
            staging.display()
        ))
    })?;
    Ok(())
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::runtime(format!("cannot write to stdout: {e}")))
        }
    }
}

pub fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("cannot serialize output: {e}")))?;
    text.push('\n');
    emit(text.as_bytes(), out)
}

/// One CSV table: header row plus records, '.' decimal separator, newline
/// after every row including the last.
pub fn emit_csv(
    header: &[&str],
    rows: &[Vec<String>],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .and_then(|_| rows.iter().try_for_each(|row| w.write_record(row)))
        .map_err(|e| CliError::runtime(format!("cannot build CSV: {e}")))?;
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::runtime(format!("cannot finish CSV: {e}")))?;
    emit(&bytes, out)
}
