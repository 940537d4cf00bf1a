use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LinearProbe, ProbeError};

pub const PROBE_FORMAT: &str = "sidprobe-v1";

/// On-disk probe document. Floats are written in shortest round-trip form,
/// so a save/load cycle reproduces every parameter bit for bit.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeDocument {
    format: String,
    dim: usize,
    input_backbones: Vec<String>,
    weights: Vec<f64>,
    bias: f64,
    trained_on: String,
    config_digest: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    l2_normalize: bool,
}

pub fn probe_to_json(probe: &LinearProbe) -> String {
    let doc = ProbeDocument {
        format: PROBE_FORMAT.to_string(),
        dim: probe.dim(),
        input_backbones: probe.input_backbones.clone(),
        weights: probe.weights.clone(),
        bias: probe.bias,
        trained_on: probe.trained_on.clone(),
        config_digest: probe.config_digest.clone(),
        l2_normalize: probe.l2_normalize,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("probe document serializes");
    s.push('\n');
    s
}

pub fn probe_from_json(text: &str) -> Result<LinearProbe, ProbeError> {
    let doc: ProbeDocument = serde_json::from_str(text).map_err(|e| ProbeError::Schema(e.to_string()))?;
    if doc.format != PROBE_FORMAT {
        return Err(ProbeError::Schema(format!(
            "format is {:?}, expected {PROBE_FORMAT:?}",
            doc.format
        )));
    }
    if doc.weights.len() != doc.dim {
        return Err(ProbeError::DimMismatch {
            expected: doc.dim,
            got: doc.weights.len(),
        });
    }
    Ok(LinearProbe::new(doc.weights, doc.bias, doc.input_backbones)?
        .with_provenance(doc.trained_on, doc.config_digest)
        .with_l2_normalize(doc.l2_normalize))
}

pub fn save_probe(probe: &LinearProbe, path: impl AsRef<Path>) -> Result<(), ProbeError> {
    let path = path.as_ref();
    fs::write(path, probe_to_json(probe)).map_err(|source| ProbeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_probe(path: impl AsRef<Path>) -> Result<LinearProbe, ProbeError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ProbeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    probe_from_json(&text)
}
