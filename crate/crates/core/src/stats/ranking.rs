use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::bias::BiasMatrix;
use super::metrics::{js_divergence, weighted_f1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    /// Entropy of the class posterior given the concept, ascending.
    DatasetEntropy,
    /// Per-concept F1 against the dataset at the best layer, descending.
    ModelF1,
    /// Per-concept JS divergence from the dataset at the best layer, ascending.
    ModelJs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConcept {
    pub concept_index: usize,
    pub concept: String,
    /// `None` for concepts with no mass in any class (entropy undefined).
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_layer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRanking {
    pub mode: RankingMode,
    pub entries: Vec<RankedConcept>,
}

impl ConceptRanking {
    /// Concept indices of the first `k` entries.
    pub fn top(&self, k: usize) -> Vec<usize> {
        self.entries.iter().take(k).map(|e| e.concept_index).collect()
    }
}

fn order(mut entries: Vec<RankedConcept>, descending: bool) -> Vec<RankedConcept> {
    entries.sort_by(|a, b| {
        let by_score = match (a.score, b.score) {
            (Some(x), Some(y)) if descending => y.total_cmp(&x),
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_score.then(a.concept_index.cmp(&b.concept_index))
    });
    entries
}

fn check_k(k: usize, concepts: usize) -> Result<()> {
    if k > concepts {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {concepts} concepts")));
    }
    Ok(())
}

/// Ranks concepts by how exclusively they belong to one class.
///
/// `P(y_i | c_k)` is proportional to `p_dataset(c_k | y_i) * P(y_i)`; the score
/// is its Shannon entropy in nats. The `k` lowest-entropy concepts are
/// returned; concepts with zero mass everywhere sort last.
pub fn rank_dataset_biased_concepts(dataset: &BiasMatrix, priors: &[f64], k: usize) -> Result<ConceptRanking> {
    check_k(k, dataset.concept_count())?;
    if priors.len() != dataset.class_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} priors for {} classes",
            priors.len(),
            dataset.class_count()
        )));
    }
    let entries = (0..dataset.concept_count())
        .map(|c| {
            let joint: Vec<f64> = (0..dataset.class_count())
                .map(|i| dataset.get(i, c) * priors[i])
                .collect();
            let mass: f64 = joint.iter().sum();
            let score = (mass > 0.0).then(|| {
                -joint
                    .iter()
                    .filter(|&&j| j > 0.0)
                    .map(|&j| {
                        let p = j / mass;
                        p * p.ln()
                    })
                    .sum::<f64>()
            });
            RankedConcept {
                concept_index: c,
                concept: dataset.concepts[c].clone(),
                score: score.map(|s| s.max(0.0)),
                best_layer: None,
            }
        })
        .collect();
    let mut entries = order(entries, false);
    entries.truncate(k);
    Ok(ConceptRanking {
        mode: RankingMode::DatasetEntropy,
        entries,
    })
}

/// JS divergence between two columns. A column with zero mass has no
/// distribution: two empty columns agree (0), one empty column is maximally
/// far (1).
fn column_js(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    match (ma > 0.0, mb > 0.0) {
        (false, false) => Ok(0.0),
        (true, true) => js_divergence(a, b),
        _ => Ok(1.0),
    }
}

/// Ranks concepts by per-column agreement between the dataset and the model
/// layer that agrees best with it (earliest layer on ties).
pub fn rank_model_concepts(
    dataset: &BiasMatrix,
    models: &[BiasMatrix],
    mode: RankingMode,
    tau: f64,
    k: usize,
) -> Result<ConceptRanking> {
    check_k(k, dataset.concept_count())?;
    if models.is_empty() {
        return Err(Error::InvalidArgument("no model layers".into()));
    }
    for m in models {
        dataset.same_axes(m)?;
    }
    let descending = match mode {
        RankingMode::ModelF1 => true,
        RankingMode::ModelJs => false,
        RankingMode::DatasetEntropy => {
            return Err(Error::InvalidArgument("dataset_entropy is not a model mode".into()))
        }
    };
    let mut entries = Vec::with_capacity(dataset.concept_count());
    for c in 0..dataset.concept_count() {
        let truth_col = dataset.column(c);
        let truth_bin: Vec<u8> = truth_col.iter().map(|&v| u8::from(v >= tau)).collect();
        let mut best: Option<(f64, usize)> = None;
        for (l, m) in models.iter().enumerate() {
            let col = m.column(c);
            let score = if descending {
                let pred: Vec<u8> = col.iter().map(|&v| u8::from(v >= tau)).collect();
                weighted_f1(&truth_bin, &pred)?
            } else {
                column_js(&truth_col, &col)?
            };
            let better = match best {
                None => true,
                Some((s, _)) if descending => score > s,
                Some((s, _)) => score < s,
            };
            if better {
                best = Some((score, l));
            }
        }
        let (score, l) = best.expect("at least one layer");
        entries.push(RankedConcept {
            concept_index: c,
            concept: dataset.concepts[c].clone(),
            score: Some(score),
            best_layer: models[l].layer_id.clone(),
        });
    }
    let mut entries = order(entries, descending);
    entries.truncate(k);
    Ok(ConceptRanking { mode, entries })
}

/// `|reference ∩ candidate| / |reference|` over concept sets.
pub fn recall_at_k(reference: &[usize], candidate: &[usize]) -> Result<f64> {
    let reference: HashSet<usize> = reference.iter().copied().collect();
    if reference.is_empty() {
        return Err(Error::InvalidArgument("empty reference set".into()));
    }
    let candidate: HashSet<usize> = candidate.iter().copied().collect();
    Ok(reference.intersection(&candidate).count() as f64 / reference.len() as f64)
}
