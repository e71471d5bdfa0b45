//! Run configuration: defaults, overridden by a JSON config file, overridden
//! by command-line flags. Every leaf remembers where its value came from.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mtmc_core::{SynthConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Trajectories to train on, infer over or score against.
    pub data: Option<PathBuf>,
    /// Held-out trajectories scored by `ablate`.
    pub eval_data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Predicted clusters read by `eval`.
    pub pred: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Training log; defaults to the checkpoint path with a `.log.jsonl` suffix.
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub paths: Paths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Flag,
    /// Taken from the input data (e.g. descriptor dimension).
    Data,
}

/// A fully merged configuration and the provenance of each leaf.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub run: RunConfig,
    value: Value,
    provenance: BTreeMap<String, Source>,
}

fn leaves(value: &Value, prefix: &str, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(v, &path, out);
            }
        }
        _ => out.push((prefix.to_string(), value.clone())),
    }
}

fn slot<'a>(root: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(root, |node, key| node.as_object_mut()?.get_mut(key))
}

/// Accepts a bare config, `{"resolved": ...}`, or any artifact carrying a
/// `"config"` key.
fn unwrap_config(value: &Value) -> &Value {
    let inner = value.get("config").unwrap_or(value);
    inner.get("resolved").unwrap_or(inner)
}

impl Resolved {
    pub fn defaults() -> Self {
        let run = RunConfig::default();
        let value = serde_json::to_value(&run).expect("config serializes");
        let mut all = Vec::new();
        leaves(&value, "", &mut all);
        let provenance = all.into_iter().map(|(p, _)| (p, Source::Default)).collect();
        Self {
            run,
            value,
            provenance,
        }
    }

    /// Overlays every leaf of `file` (see [`unwrap_config`]).
    pub fn apply_file(&mut self, file: &Value) -> Result<(), CliError> {
        let mut all = Vec::new();
        leaves(unwrap_config(file), "", &mut all);
        for (path, v) in all.into_iter().filter(|(p, _)| !p.is_empty()) {
            self.set(&path, v, Source::File)?;
        }
        Ok(())
    }

    /// Sets one leaf by dotted path, e.g. `train.loss.fpr`.
    pub fn set(&mut self, path: &str, v: Value, source: Source) -> Result<(), CliError> {
        let target = slot(&mut self.value, path).ok_or_else(|| CliError::Config(format!("unknown field `{path}`")))?;
        *target = v;
        let mut under = Vec::new();
        leaves(target, path, &mut under);
        self.provenance.retain(|p, _| !(p == path || p.starts_with(&format!("{path}."))));
        for (p, _) in under {
            self.provenance.insert(p, source);
        }
        self.reparse()
    }

    /// Like [`set`](Self::set) but only when the leaf still holds its default.
    pub fn set_if_default(&mut self, path: &str, v: Value, source: Source) -> Result<(), CliError> {
        if self.source(path) == Some(Source::Default) {
            self.set(path, v, source)?;
        }
        Ok(())
    }

    fn reparse(&mut self) -> Result<(), CliError> {
        let text = self.value.to_string();
        let de = &mut serde_json::Deserializer::from_str(&text);
        self.run = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("field `{path}`: {}", e.into_inner()))
        })?;
        Ok(())
    }

    pub fn source(&self, path: &str) -> Option<Source> {
        self.provenance.get(path).copied()
    }

    pub fn provenance(&self) -> &BTreeMap<String, Source> {
        &self.provenance
    }

    /// The value echoed into every artifact.
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("resolved".into(), serde_json::to_value(&self.run).expect("config serializes"));
        map.insert("provenance".into(), serde_json::to_value(&self.provenance).expect("provenance serializes"));
        Value::Object(map)
    }
}

/// Parses a `--set key=value` argument; the value is JSON, falling back to a
/// plain string.
pub fn parse_assignment(arg: &str) -> Result<(String, Value), String> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {arg:?}"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}
