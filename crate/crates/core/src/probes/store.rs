//! JSON-lines probe store: one record per probe, vectors as base64 of
//! little-endian `f64`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::probe::{CvScore, Standardizer, TrainedProbe};

pub const PROBE_STORE_FILE: &str = "probes.jsonl";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeRecord {
    layer_id: String,
    concept: String,
    concept_index: usize,
    weights: String,
    bias: f64,
    chosen_c: f64,
    cv_scores: Vec<CvScore>,
    mean: String,
    scale: String,
    degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constant_rate: Option<f64>,
    converged: bool,
}

fn encode(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of f64", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect())
}

impl From<&TrainedProbe> for ProbeRecord {
    fn from(p: &TrainedProbe) -> Self {
        Self {
            layer_id: p.layer_id.clone(),
            concept: p.concept.clone(),
            concept_index: p.concept_index,
            weights: encode(&p.weights),
            bias: p.bias,
            chosen_c: p.chosen_c,
            cv_scores: p.cv_scores.clone(),
            mean: encode(&p.standardizer.mean),
            scale: encode(&p.standardizer.scale),
            degenerate: p.degenerate,
            constant_rate: p.constant_rate,
            converged: p.converged,
        }
    }
}

impl TryFrom<ProbeRecord> for TrainedProbe {
    type Error = String;

    fn try_from(r: ProbeRecord) -> std::result::Result<Self, String> {
        let weights = decode(&r.weights)?;
        let mean = decode(&r.mean)?;
        let scale = decode(&r.scale)?;
        if mean.len() != weights.len() || scale.len() != weights.len() {
            return Err("standardization width differs from weight width".into());
        }
        Ok(Self {
            layer_id: r.layer_id,
            concept_index: r.concept_index,
            concept: r.concept,
            weights,
            bias: r.bias,
            chosen_c: r.chosen_c,
            cv_scores: r.cv_scores,
            standardizer: Standardizer { mean, scale },
            degenerate: r.degenerate,
            constant_rate: r.constant_rate,
            converged: r.converged,
        })
    }
}

pub fn probes_to_jsonl(probes: &[TrainedProbe]) -> Result<String> {
    let mut out = String::new();
    for p in probes {
        out.push_str(&serde_json::to_string(&ProbeRecord::from(p))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_probe_store(path: &Path, probes: &[TrainedProbe]) -> Result<()> {
    crate::pipeline::write_atomic(path, probes_to_jsonl(probes)?.as_bytes())
}

pub fn read_probe_store(path: &Path) -> Result<Vec<TrainedProbe>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let schema = |reason: String| Error::Schema {
                path: path.to_path_buf(),
                reason: format!("line {}: {reason}", i + 1),
            };
            let rec: ProbeRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
            TrainedProbe::try_from(rec).map_err(schema)
        })
        .collect()
}
