//! Trajectory files: JSON Lines with an optional header line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mtmc_core::{average_descriptors, Error as CoreError, TrajectoryRecord, TrajectorySet};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const HEADER_VERSION: u32 = 1;

/// Optional first line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub mtmc_header: u32,
    pub dim: usize,
    pub cameras: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

/// One input line. Either `feature` or per-box `embeddings` must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    trajectory_id: String,
    camera_id: u32,
    start_frame: i64,
    end_frame: i64,
    #[serde(default)]
    feature: Option<Vec<f64>>,
    #[serde(default)]
    embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    identity_id: Option<String>,
}

impl RawRecord {
    fn into_record(self) -> Result<TrajectoryRecord, String> {
        let feature = match (self.feature, self.embeddings) {
            (Some(f), None) => f,
            (None, Some(e)) => average_descriptors(&e).map_err(|e| format!("embeddings: {e}"))?,
            (Some(_), Some(_)) => return Err("both `feature` and `embeddings` given".into()),
            (None, None) => return Err("missing field `feature` (or `embeddings`)".into()),
        };
        Ok(TrajectoryRecord {
            trajectory_id: self.trajectory_id,
            camera_id: self.camera_id,
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            feature,
            identity_id: self.identity_id,
        })
    }
}

/// Parsed trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub set: TrajectorySet,
    pub header: Option<Header>,
}

pub fn load_trajectories(path: &Path) -> Result<TrajectorySet, CliError> {
    Ok(read_trajectory_file(path)?.set)
}

pub fn read_trajectory_file(path: &Path) -> Result<TrajectoryFile, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_trajectories(BufReader::new(file), path)
}

/// Parses JSONL from `reader`; `path` is only used in diagnostics.
pub fn parse_trajectories<R: BufRead>(reader: R, path: &Path) -> Result<TrajectoryFile, CliError> {
    let at = |line: usize, message: String| CliError::Schema {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut header = None;
    let mut records = Vec::new();
    let mut lines_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut dim = None;
    for (k, line) in reader.lines().enumerate() {
        let n = k + 1;
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| at(n, e.to_string()))?;
        if value.get("mtmc_header").is_some() {
            if header.is_some() || !records.is_empty() {
                return Err(at(n, "header must be the first line".into()));
            }
            let h: Header = serde_json::from_value(value).map_err(|e| at(n, e.to_string()))?;
            if h.mtmc_header != HEADER_VERSION {
                return Err(at(n, format!("unsupported header version {}", h.mtmc_header)));
            }
            dim = Some(h.dim);
            header = Some(h);
            continue;
        }
        let raw: RawRecord = serde_json::from_value(value).map_err(|e| at(n, e.to_string()))?;
        let record = raw.into_record().map_err(|m| at(n, m))?;
        let expected = *dim.get_or_insert(record.feature.len());
        if record.feature.len() != expected {
            return Err(at(
                n,
                format!("feature has {} entries, expected {expected}", record.feature.len()),
            ));
        }
        if let Some(first) = lines_of.insert(record.trajectory_id.clone(), n) {
            return Err(at(
                n,
                format!("duplicate trajectory_id {:?} (first on line {first})", record.trajectory_id),
            ));
        }
        records.push(record);
    }
    let cameras = header.as_ref().map(|h| h.cameras);
    let set = TrajectorySet::new(records, cameras, dim).map_err(|e| match &e {
        CoreError::InvalidRecord { id, .. } | CoreError::DuplicateTrajectory(id) => {
            at(lines_of.get(id).copied().unwrap_or(0), e.to_string())
        }
        _ => CliError::Core(e),
    })?;
    Ok(TrajectoryFile { set, header })
}

/// Writes the header line and one record per line. Floats use the shortest
/// round-trip representation, so loading reproduces the set bit for bit.
pub fn save_trajectories(path: &Path, set: &TrajectorySet, config: Option<&Value>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_trajectories(&mut out, set, config).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_trajectories<W: Write>(out: &mut W, set: &TrajectorySet, config: Option<&Value>) -> std::io::Result<()> {
    let header = Header {
        mtmc_header: HEADER_VERSION,
        dim: set.dim(),
        cameras: set.camera_count(),
        config: config.cloned(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for record in set.records() {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
