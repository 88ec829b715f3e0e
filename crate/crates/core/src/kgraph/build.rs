use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::stats::BiasMatrix;

use super::edge::{classify_edge, edge_width, EdgeColor, LayerMode, LayerModeLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Class,
    Concept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGEdge {
    pub class: String,
    pub concept: String,
    pub dataset_prob: f64,
    pub model_probs: Vec<f64>,
    pub color: EdgeColor,
    pub width: f64,
}

/// Serialized as `graph.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeGraph {
    pub tau: f64,
    layer_mode: LayerModeLabel,
    pub layers: Vec<String>,
    pub nodes: Vec<KGNode>,
    pub edges: Vec<KGEdge>,
}

impl KnowledgeGraph {
    /// `"aggregate"` or `"layer:<id>"`.
    pub fn layer_mode(&self) -> &str {
        &self.layer_mode.0
    }

    pub fn resolved_layer_mode(&self) -> Result<LayerMode> {
        LayerMode::parse(&self.layer_mode.0, &self.layers)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphOptions {
    pub tau: f64,
    pub layer_mode: LayerMode,
    /// Keep gray edges. They can only appear in single-layer mode, where
    /// candidate edges come from the any-layer inclusion rule.
    pub include_gray: bool,
}

/// Builds the graph from the dataset matrix and one model matrix per layer.
///
/// An edge `(class, concept)` is a candidate when the dataset probability or
/// any layer's model probability reaches τ (in single-layer mode without
/// `include_gray`, only the selected layer counts). Candidates are colored by
/// [`classify_edge`]; gray candidates are dropped unless requested. Nodes are
/// every class plus every concept with at least one edge.
pub fn build_graph(
    dataset: &BiasMatrix,
    models: &[BiasMatrix],
    categories: &[String],
    opts: &GraphOptions,
) -> Result<KnowledgeGraph> {
    if !(0.0..=1.0).contains(&opts.tau) {
        return Err(Error::InvalidArgument(format!("tau {} outside [0, 1]", opts.tau)));
    }
    if models.is_empty() {
        return Err(Error::InvalidArgument("no model layers".into()));
    }
    for m in models {
        dataset.same_axes(m)?;
    }
    if categories.len() != dataset.concept_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} categories for {} concepts",
            categories.len(),
            dataset.concept_count()
        )));
    }
    let layers: Vec<String> = models.iter().map(|m| m.layer_id.clone().unwrap_or_default()).collect();
    if let LayerMode::Single(l) = opts.layer_mode {
        if l >= layers.len() {
            return Err(Error::InvalidArgument(format!("layer position {l} out of range")));
        }
    }
    let tau = opts.tau;
    let inclusion = if opts.include_gray {
        LayerMode::Aggregate
    } else {
        opts.layer_mode.clone()
    };

    let rows = Execution::default().try_map_range(dataset.class_count(), |i| {
        let mut edges = Vec::new();
        for k in 0..dataset.concept_count() {
            let d = dataset.get(i, k);
            let probs: Vec<f64> = models.iter().map(|m| m.get(i, k)).collect();
            if classify_edge(d, &probs, tau, &inclusion)? == EdgeColor::Gray {
                continue;
            }
            let color = classify_edge(d, &probs, tau, &opts.layer_mode)?;
            if color == EdgeColor::Gray && !opts.include_gray {
                continue;
            }
            edges.push(KGEdge {
                class: dataset.classes[i].clone(),
                concept: dataset.concepts[k].clone(),
                dataset_prob: d,
                width: edge_width(&probs)?,
                model_probs: probs,
                color,
            });
        }
        Ok::<_, Error>(edges)
    })?;
    let edges: Vec<KGEdge> = rows.into_iter().flatten().collect();

    let mut nodes: Vec<KGNode> = dataset
        .classes
        .iter()
        .map(|c| KGNode {
            id: c.clone(),
            kind: NodeKind::Class,
            category: None,
        })
        .collect();
    for (k, concept) in dataset.concepts.iter().enumerate() {
        if edges.iter().any(|e| &e.concept == concept) {
            nodes.push(KGNode {
                id: concept.clone(),
                kind: NodeKind::Concept,
                category: Some(categories[k].clone()),
            });
        }
    }
    Ok(KnowledgeGraph {
        tau,
        layer_mode: LayerModeLabel(opts.layer_mode.label(&layers)),
        layers,
        nodes,
        edges,
    })
}
