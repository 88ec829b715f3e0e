use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptEntry {
    pub name: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDescriptor {
    pub layer_id: String,
    /// 1-based position in the network.
    pub index: usize,
    pub unit_count: usize,
    pub spatial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    /// Activation file, relative to the bundle root (`.f32` or `.csv`).
    pub file: String,
}

impl LayerDescriptor {
    /// Values stored per (image, unit): `H*W` for spatial layers, else 1.
    pub fn spatial_size(&self) -> usize {
        match (self.spatial, self.height, self.width) {
            (true, Some(h), Some(w)) => h * w,
            _ => 1,
        }
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub image_count: usize,
    pub classes: Vec<String>,
    pub concepts: Vec<ConceptEntry>,
    pub layers: Vec<LayerDescriptor>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        manifest.validate().map_err(|reason| Error::Manifest {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(manifest)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn concept_names(&self) -> Vec<&str> {
        self.concepts.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn layer_ids(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.layer_id.as_str()).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.name == name)
    }

    pub fn layer_position(&self, layer_id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.layer_id == layer_id)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.image_count < 1 {
            return Err("image_count must be at least 1".into());
        }
        if self.classes.len() < 2 {
            return Err("at least two classes are required".into());
        }
        if self.concepts.is_empty() {
            return Err("at least one concept is required".into());
        }
        if self.layers.is_empty() {
            return Err("at least one layer is required".into());
        }
        unique("class", self.classes.iter().map(String::as_str))?;
        unique("concept", self.concepts.iter().map(|c| c.name.as_str()))?;
        unique("layer_id", self.layers.iter().map(|l| l.layer_id.as_str()))?;
        // Graph node ids are bare names, so the two namespaces must not meet.
        if let Some(c) = self.concepts.iter().find(|c| self.classes.contains(&c.name)) {
            return Err(format!("name {:?} is both a class and a concept", c.name));
        }
        for (pos, layer) in self.layers.iter().enumerate() {
            if layer.index != pos + 1 {
                return Err(format!(
                    "layer {:?} has index {}, expected {} (indices must run 1..L in order)",
                    layer.layer_id,
                    layer.index,
                    pos + 1
                ));
            }
            if layer.unit_count < 1 {
                return Err(format!("layer {:?} has no units", layer.layer_id));
            }
            match (layer.spatial, layer.height, layer.width) {
                (true, Some(h), Some(w)) if h * w >= 1 => {}
                (true, Some(_), Some(_)) => return Err(format!("layer {:?} has empty spatial extent", layer.layer_id)),
                (true, _, _) => return Err(format!("spatial layer {:?} needs height and width", layer.layer_id)),
                (false, None, None) => {}
                (false, _, _) => {
                    return Err(format!(
                        "non-spatial layer {:?} must not declare height/width",
                        layer.layer_id
                    ))
                }
            }
            if !(layer.file.ends_with(".f32") || layer.file.ends_with(".csv")) {
                return Err(format!(
                    "layer {:?} file {:?} must end in .f32 or .csv",
                    layer.layer_id, layer.file
                ));
            }
        }
        Ok(())
    }
}

fn unique<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(format!("duplicate {what} {n:?}"));
        }
    }
    Ok(())
}
