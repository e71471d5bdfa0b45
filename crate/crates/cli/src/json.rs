use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub fn read(path: &Path) -> Result<Value, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::format(path, e.to_string()))
}

/// Compact for large payloads such as checkpoints.
pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, value, false)
}

pub fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, value, true)
}

fn write_with<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let result = if pretty {
        serde_json::to_writer_pretty(&mut out, value)
    } else {
        serde_json::to_writer(&mut out, value)
    };
    result.map_err(|e| CliError::format(path, e.to_string()))?;
    out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Writes one JSON object per line.
pub fn write_lines<T: Serialize>(path: &Path, header: &Value, rows: &[T]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    serde_json::to_writer(&mut out, header).map_err(|e| CliError::format(path, e.to_string()))?;
    out.write_all(b"\n").map_err(io)?;
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| CliError::format(path, e.to_string()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}
