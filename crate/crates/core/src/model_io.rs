//! JSON model documents.
//!
//! ```json
//! {"format_version":1,"name":"net","input_dim":2,"layers":[
//!   {"kind":"fully_connected","in":2,"out":1,"weights":[[0.5,-1.0]],"bias":[0.0]}]}
//! ```
//!
//! Reals are written in shortest round-trip form, so save followed by load
//! reproduces every parameter bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::network::{
    BatchNorm1DNode, FullyConnectedNode, LayerNode, NetworkError, ReLUNode, SequentialNetwork,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported version {0} (this build reads format_version {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("layers[{index}]: unknown layer kind \"{kind}\"")]
    UnknownKind { index: usize, kind: String },
    #[error("layers[{index}]: {message}")]
    Layer { index: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] NetworkError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    format_version: u64,
    name: String,
    input_dim: usize,
    layers: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FullyConnectedRecord {
    kind: String,
    #[serde(rename = "in")]
    in_dim: usize,
    #[serde(rename = "out")]
    out_dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchNormRecord {
    kind: String,
    dim: usize,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReluRecord {
    kind: String,
    dim: usize,
}

fn layer_record(node: &LayerNode) -> Value {
    let v = match node {
        LayerNode::FullyConnected(fc) => serde_json::to_value(FullyConnectedRecord {
            kind: node.kind().into(),
            in_dim: fc.in_dim,
            out_dim: fc.out_dim,
            weights: fc
                .weights
                .data()
                .chunks(fc.in_dim)
                .map(<[f64]>::to_vec)
                .collect(),
            bias: fc.bias.data().to_vec(),
        }),
        LayerNode::BatchNorm1D(bn) => serde_json::to_value(BatchNormRecord {
            kind: node.kind().into(),
            dim: bn.dim,
            gamma: bn.gamma.data().to_vec(),
            beta: bn.beta.data().to_vec(),
            running_mean: bn.running_mean.data().to_vec(),
            running_var: bn.running_var.data().to_vec(),
            eps: bn.eps,
        }),
        LayerNode::ReLU(r) => serde_json::to_value(ReluRecord {
            kind: node.kind().into(),
            dim: r.dim,
        }),
    };
    v.expect("layer records serialize")
}

pub fn to_json(net: &SequentialNetwork) -> Result<String, ModelIoError> {
    net.validate().map_err(NetworkError::Invalid)?;
    let doc = RawDocument {
        format_version: FORMAT_VERSION as u64,
        name: net.name.clone(),
        input_dim: net.input_dim,
        layers: net.nodes.iter().map(layer_record).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> Result<SequentialNetwork, ModelIoError> {
    // version gate first, so a future document fails with the right message
    let value: Value = serde_json::from_str(text)?;
    if let Some(v) = value.get("format_version").and_then(Value::as_u64) {
        if v != FORMAT_VERSION as u64 {
            return Err(ModelIoError::UnsupportedVersion(v));
        }
    }
    let doc: RawDocument = serde_json::from_value(value)?;
    let mut nodes = Vec::with_capacity(doc.layers.len());
    for (index, layer) in doc.layers.into_iter().enumerate() {
        nodes.push(decode_layer(index, layer)?);
    }
    Ok(SequentialNetwork::try_new(doc.name, doc.input_dim, nodes)?)
}

fn decode_layer(index: usize, layer: Value) -> Result<LayerNode, ModelIoError> {
    let layer_err = |message: String| ModelIoError::Layer { index, message };
    let kind = layer
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| layer_err("missing string field \"kind\"".into()))?
        .to_owned();
    let node = match kind.as_str() {
        "fully_connected" => {
            let r: FullyConnectedRecord =
                serde_json::from_value(layer).map_err(|e| layer_err(e.to_string()))?;
            if r.weights.len() != r.out_dim {
                return Err(layer_err(format!(
                    "weights has {} rows, \"out\" is {}",
                    r.weights.len(),
                    r.out_dim
                )));
            }
            if let Some(row) = r.weights.iter().position(|row| row.len() != r.in_dim) {
                return Err(layer_err(format!(
                    "weights[{row}] has {} entries, \"in\" is {}",
                    r.weights[row].len(),
                    r.in_dim
                )));
            }
            if r.bias.len() != r.out_dim {
                return Err(layer_err(format!(
                    "bias has {} entries, \"out\" is {}",
                    r.bias.len(),
                    r.out_dim
                )));
            }
            let flat = r.weights.into_iter().flatten().collect();
            LayerNode::FullyConnected(
                FullyConnectedNode::new(r.in_dim, r.out_dim, flat, r.bias)
                    .map_err(|e| layer_err(e.to_string()))?,
            )
        }
        "batch_norm_1d" => {
            let r: BatchNormRecord =
                serde_json::from_value(layer).map_err(|e| layer_err(e.to_string()))?;
            for (field, v) in [
                ("gamma", &r.gamma),
                ("beta", &r.beta),
                ("running_mean", &r.running_mean),
                ("running_var", &r.running_var),
            ] {
                if v.len() != r.dim {
                    return Err(layer_err(format!(
                        "{field} has {} entries, \"dim\" is {}",
                        v.len(),
                        r.dim
                    )));
                }
            }
            LayerNode::BatchNorm1D(
                BatchNorm1DNode::new(r.gamma, r.beta, r.running_mean, r.running_var, r.eps)
                    .map_err(|e| layer_err(e.to_string()))?,
            )
        }
        "relu" => {
            let r: ReluRecord =
                serde_json::from_value(layer).map_err(|e| layer_err(e.to_string()))?;
            LayerNode::ReLU(ReLUNode { dim: r.dim })
        }
        _ => return Err(ModelIoError::UnknownKind { index, kind }),
    };
    Ok(node)
}

/// Writes `contents` through a temporary file in the destination directory
/// and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_model(net: &SequentialNetwork, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let path = path.as_ref();
    let text = to_json(net)?;
    write_atomic(path, text.as_bytes()).map_err(|source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SequentialNetwork, ModelIoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}
