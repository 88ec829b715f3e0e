//! Concept-bias analysis over exported neural-network activations.
//!
//! The crate compares how strongly concepts co-occur with classes in an
//! annotated dataset against how strongly linear probes trained on a model's
//! layer activations recover the same association. The pipeline is:
//!
//! 1. [`ingest`]: load a bundle (manifest, labels, annotations, per-layer
//!    activations) and pool spatial maps to one scalar per unit.
//! 2. [`probes`]: train one class-weighted, L2-regularized logistic
//!    regression per (layer, concept) with cross-validated strength.
//! 3. [`stats`]: dataset and model bias matrices, alignment metrics,
//!    threshold sweeps, concept rankings and recall.
//! 4. [`kgraph`]: the class/concept knowledge graph and its JSON export.
//! 5. [`pipeline`]: run directories with hashed, reproducible artifacts.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature (default) they run on rayon, otherwise sequentially.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod fixture;
pub mod ingest;
pub mod kgraph;
pub mod matrix;
pub mod pipeline;
pub mod probes;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matrix::Matrix;
