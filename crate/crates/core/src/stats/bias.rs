use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::matrix::Matrix;
use crate::probes::{predict_proba, TrainedProbe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasSource {
    Dataset,
    Model,
}

/// Class x concept probability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMatrix {
    pub source: BiasSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_id: Option<String>,
    pub classes: Vec<String>,
    pub concepts: Vec<String>,
    pub values: Matrix<f64>,
}

impl BiasMatrix {
    pub fn new(
        source: BiasSource,
        layer_id: Option<String>,
        classes: Vec<String>,
        concepts: Vec<String>,
        values: Matrix<f64>,
    ) -> Result<Self> {
        let m = Self {
            source,
            layer_id,
            classes,
            concepts,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.shape() != (self.classes.len(), self.concepts.len()) {
            return Err(Error::ShapeMismatch(format!(
                "values are {:?} for {} classes x {} concepts",
                self.values.shape(),
                self.classes.len(),
                self.concepts.len()
            )));
        }
        if let Some(v) = self.values.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("probability {v} outside [0, 1]")));
        }
        if (self.source == BiasSource::Model) != self.layer_id.is_some() {
            return Err(Error::InvalidArgument(
                "model matrices carry a layer id, dataset matrices do not".into(),
            ));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn get(&self, class: usize, concept: usize) -> f64 {
        self.values.get(class, concept)
    }

    pub fn column(&self, concept: usize) -> Vec<f64> {
        self.values.column(concept)
    }

    pub fn same_axes(&self, other: &BiasMatrix) -> Result<()> {
        if self.classes != other.classes || self.concepts != other.concepts {
            return Err(Error::ShapeMismatch(
                "bias matrices disagree on classes or concepts".into(),
            ));
        }
        Ok(())
    }
}

/// `N_{class, concept} / N_class` from raw tables.
pub fn dataset_prob_table(annotations: &Matrix<u8>, labels: &[usize], class_count: usize) -> Result<Matrix<f64>> {
    if annotations.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} annotation rows vs {} labels",
            annotations.rows(),
            labels.len()
        )));
    }
    let k = annotations.cols();
    let mut counts = Matrix::<f64>::zeros(class_count, k);
    let mut sizes = vec![0usize; class_count];
    for (n, &y) in labels.iter().enumerate() {
        if y >= class_count {
            return Err(Error::InvalidArgument(format!("class index {y} out of range")));
        }
        sizes[y] += 1;
        for c in 0..k {
            if annotations.get(n, c) == 1 {
                counts.set(y, c, counts.get(y, c) + 1.0);
            }
        }
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("class {empty} has no samples")));
    }
    Ok(Matrix::from_fn(class_count, k, |i, c| {
        counts.get(i, c) / sizes[i] as f64
    }))
}

pub fn dataset_concept_prob(dataset: &Dataset) -> Result<BiasMatrix> {
    let m = &dataset.manifest;
    let values = dataset_prob_table(&dataset.annotations, &dataset.labels, m.class_count())?;
    BiasMatrix::new(
        BiasSource::Dataset,
        None,
        m.classes.clone(),
        m.concept_names().into_iter().map(String::from).collect(),
        values,
    )
}

/// Per-class mean of per-image probabilities; `probs[k][n]` is the
/// probability of concept `k` on image `n`.
pub fn class_mean_table(probs: &[Vec<f64>], labels: &[usize], class_count: usize) -> Result<Matrix<f64>> {
    let mut sums = Matrix::<f64>::zeros(class_count, probs.len());
    let mut sizes = vec![0usize; class_count];
    for &y in labels {
        if y >= class_count {
            return Err(Error::InvalidArgument(format!("class index {y} out of range")));
        }
        sizes[y] += 1;
    }
    for (k, col) in probs.iter().enumerate() {
        if col.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "concept {k} has {} probabilities for {} images",
                col.len(),
                labels.len()
            )));
        }
        for (&p, &y) in col.iter().zip(labels) {
            sums.set(y, k, sums.get(y, k) + p);
        }
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("class {empty} has no samples")));
    }
    Ok(Matrix::from_fn(class_count, probs.len(), |i, k| {
        (sums.get(i, k) / sizes[i] as f64).clamp(0.0, 1.0)
    }))
}

/// Model-side bias at one layer from that layer's probes, evaluated on every
/// image of the dataset.
pub fn model_concept_prob(dataset: &Dataset, layer_id: &str, probes: &[TrainedProbe]) -> Result<BiasMatrix> {
    let m = &dataset.manifest;
    let features = dataset.layer(layer_id).ok_or_else(|| Error::Unknown {
        kind: "layer",
        name: layer_id.to_string(),
    })?;
    let probs = (0..m.concept_count())
        .map(|k| {
            let probe = probes
                .iter()
                .find(|p| p.layer_id == layer_id && p.concept_index == k)
                .ok_or_else(|| Error::MissingProbe {
                    layer: layer_id.to_string(),
                    concept: k,
                })?;
            predict_proba(probe, features)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = class_mean_table(&probs, &dataset.labels, m.class_count())?;
    BiasMatrix::new(
        BiasSource::Model,
        Some(layer_id.to_string()),
        m.classes.clone(),
        m.concept_names().into_iter().map(String::from).collect(),
        values,
    )
}

/// Empirical class frequencies.
pub fn class_priors(labels: &[usize], class_count: usize) -> Vec<f64> {
    let mut counts = vec![0.0; class_count];
    for &y in labels {
        counts[y] += 1.0;
    }
    let n = labels.len().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}
