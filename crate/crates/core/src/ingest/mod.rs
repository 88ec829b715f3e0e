//! Bundle loading, validation, GAP pooling and fold construction.

pub(crate) mod bundle;
mod folds;
mod gap;
mod manifest;

pub use bundle::{load_bundle, load_bundle_with, save_bundle, Dataset};
pub use folds::{stratified_folds, FoldAssignment};
pub use gap::gap_pool;
pub use manifest::{ConceptEntry, DatasetManifest, LayerDescriptor, MANIFEST_FILE};

/// File names inside a bundle root.
pub const LABELS_FILE: &str = "labels.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
