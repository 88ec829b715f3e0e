//! Class/concept knowledge graph with dataset-vs-model edge colors.

mod build;
mod edge;

pub use build::{build_graph, GraphOptions, KGEdge, KGNode, KnowledgeGraph, NodeKind};
pub use edge::{classify_edge, edge_width, EdgeColor, LayerMode};
