//! Linear concept probes on pooled activations.

mod ap;
mod logreg;
mod probe;
mod store;
mod train;
mod weights;

pub use ap::average_precision;
pub use logreg::{fit_logreg, sigmoid, FitOptions, LogisticFit, LogisticObjective};
pub use probe::{predict_proba, train_probe, CvScore, ProbeSettings, ProbeSpec, Standardizer, TrainedProbe};
pub use store::{read_probe_store, write_probe_store, PROBE_STORE_FILE};
pub use train::{train_all_probes, training_rows};
pub use weights::{class_balanced_weights, ClassWeights};
