use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::bias::BiasMatrix;

/// `(layer index, probability)` across layers, 1-based in model order.
pub fn concept_layer_dynamics(models: &[BiasMatrix], class: usize, concept: usize) -> Result<Vec<(usize, f64)>> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("no model layers".into()))?;
    if class >= first.class_count() {
        return Err(Error::Unknown {
            kind: "class",
            name: class.to_string(),
        });
    }
    if concept >= first.concept_count() {
        return Err(Error::Unknown {
            kind: "concept",
            name: concept.to_string(),
        });
    }
    Ok(models
        .iter()
        .enumerate()
        .map(|(l, m)| (l + 1, m.get(class, concept)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSeries {
    pub class: String,
    pub concept: String,
    pub dataset_prob: f64,
    pub values: Vec<f64>,
}

/// Contents of `dynamics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsPayload {
    pub layers: Vec<String>,
    pub series: Vec<DynamicsSeries>,
}

/// Every (class, concept) series, class-major.
pub fn dynamics_payload(dataset: &BiasMatrix, models: &[BiasMatrix]) -> Result<DynamicsPayload> {
    for m in models {
        dataset.same_axes(m)?;
    }
    let mut series = Vec::with_capacity(dataset.class_count() * dataset.concept_count());
    for i in 0..dataset.class_count() {
        for k in 0..dataset.concept_count() {
            series.push(DynamicsSeries {
                class: dataset.classes[i].clone(),
                concept: dataset.concepts[k].clone(),
                dataset_prob: dataset.get(i, k),
                values: concept_layer_dynamics(models, i, k)?
                    .into_iter()
                    .map(|(_, p)| p)
                    .collect(),
            });
        }
    }
    Ok(DynamicsPayload {
        layers: models.iter().filter_map(|m| m.layer_id.clone()).collect(),
        series,
    })
}
