//! Model checkpoints: `{"dim", "blocks": {name: [{"w", "b"}]}, "config"}`.

use std::collections::BTreeMap;
use std::path::Path;

use mtmc_core::gcn::BLOCK_NAMES;
use mtmc_core::mlp::{Activation, Layer, Mlp};
use mtmc_core::ModelParameters;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerJson {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointJson {
    dim: usize,
    blocks: BTreeMap<String, Vec<LayerJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Value>,
}

/// A loaded checkpoint and the run configuration it was written with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParameters,
    pub config: Option<Value>,
}

fn block_to_json(block: &Mlp) -> Vec<LayerJson> {
    block
        .layers
        .iter()
        .map(|l| LayerJson {
            w: l.weights.chunks(l.in_dim).map(<[f64]>::to_vec).collect(),
            b: l.bias.clone(),
        })
        .collect()
}

fn block_from_json(name: &str, layers: Vec<LayerJson>) -> Result<Mlp, String> {
    let last = layers.len().saturating_sub(1);
    let mut out = Vec::with_capacity(layers.len());
    for (k, layer) in layers.into_iter().enumerate() {
        let out_dim = layer.w.len();
        let in_dim = layer.w.first().map_or(0, Vec::len);
        if out_dim == 0 || in_dim == 0 {
            return Err(format!("{name}[{k}]: empty weight matrix"));
        }
        if let Some(r) = layer.w.iter().position(|row| row.len() != in_dim) {
            return Err(format!("{name}[{k}]: row {r} has {} entries, expected {in_dim}", layer.w[r].len()));
        }
        if layer.b.len() != out_dim {
            return Err(format!("{name}[{k}]: bias has {} entries, expected {out_dim}", layer.b.len()));
        }
        let activation = if name == "classifier" && k == last {
            Activation::Softmax
        } else {
            Activation::Relu
        };
        out.push(Layer {
            in_dim,
            out_dim,
            activation,
            weights: layer.w.into_iter().flatten().collect(),
            bias: layer.b,
        });
    }
    for (k, pair) in out.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(format!(
                "{name}[{}]: input width {} does not match previous output {}",
                k + 1,
                pair[1].in_dim,
                pair[0].out_dim
            ));
        }
    }
    Ok(Mlp { layers: out })
}

pub fn to_value(params: &ModelParameters, config: Option<&Value>) -> Value {
    let blocks = params
        .blocks()
        .iter()
        .map(|(name, block)| (name.to_string(), block_to_json(block)))
        .collect();
    let json = CheckpointJson {
        dim: params.dim(),
        blocks,
        config: config.cloned(),
    };
    serde_json::to_value(json).expect("checkpoint serializes")
}

pub fn from_value(value: Value) -> Result<Checkpoint, String> {
    let json: CheckpointJson = serde_json::from_value(value).map_err(|e| e.to_string())?;
    if let Some(name) = json.blocks.keys().find(|k| !BLOCK_NAMES.contains(&k.as_str())) {
        return Err(format!("unknown block {name:?}"));
    }
    let mut blocks = json.blocks;
    let mut take = |name: &str| {
        let layers = blocks.remove(name).ok_or_else(|| format!("missing block {name:?}"))?;
        block_from_json(name, layers)
    };
    let params = ModelParameters {
        node_encoder: take("node_encoder")?,
        edge_encoder: take("edge_encoder")?,
        node_update: take("node_update")?,
        edge_update: take("edge_update")?,
        classifier: take("classifier")?,
    };
    if params.dim() != json.dim {
        return Err(format!("dim is {} but node_encoder takes {}", json.dim, params.dim()));
    }
    params.validate().map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        params,
        config: json.config,
    })
}

pub fn save(path: &Path, params: &ModelParameters, config: Option<&Value>) -> Result<(), CliError> {
    json::write(path, &to_value(params, config))
}

pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
    from_value(json::read(path)?).map_err(|m| CliError::format(path, m))
}
