//! Bias matrices, alignment metrics, sweeps and concept rankings.

mod bias;
mod dynamics;
mod metrics;
mod ranking;
mod sweep;

pub use bias::{
    class_mean_table, class_priors, dataset_concept_prob, dataset_prob_table, model_concept_prob, BiasMatrix,
    BiasSource,
};
pub use dynamics::{concept_layer_dynamics, dynamics_payload, DynamicsPayload, DynamicsSeries};
pub use metrics::{alignment_report, binarize, js_divergence, weighted_f1, AlignmentReport};
pub use ranking::{
    rank_dataset_biased_concepts, rank_model_concepts, recall_at_k, ConceptRanking, RankedConcept, RankingMode,
};
pub use sweep::{default_tau_grid, detection_score, threshold_sweep, SweepLayer, SweepPoint, SweepReport};
