use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::bias::BiasMatrix;

/// `1` where `value >= tau`.
pub fn binarize(values: &Matrix<f64>, tau: f64) -> Matrix<u8> {
    values.map(|&v| u8::from(v >= tau))
}

/// Support-weighted F1 over the two indicator classes {0, 1}, with `truth`
/// as ground truth. A class whose precision + recall is zero scores 0.
pub fn weighted_f1(truth: &[u8], pred: &[u8]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth items vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no items to score".into()));
    }
    let n = truth.len() as f64;
    let mut total = 0.0;
    for class in [0u8, 1] {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == class, p == class) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        let support = tp + fn_;
        if support == 0.0 {
            continue;
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = tp / support;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += support / n * f1;
    }
    Ok(total)
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Square-root Jensen-Shannon divergence with base-2 logarithms, after
/// normalizing each operand to unit mass. Lies in `[0, 1]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} cells", p.len(), q.len())));
    }
    if let Some(v) = p.iter().chain(q).find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "entry {v} is not a finite non-negative value"
        )));
    }
    let mass_p: f64 = p.iter().sum();
    let mass_q: f64 = q.iter().sum();
    if mass_p <= 0.0 || mass_q <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let p: Vec<f64> = p.iter().map(|v| v / mass_p).collect();
    let q: Vec<f64> = q.iter().map(|v| v / mass_q).collect();
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a + b) / 2.0).collect();
    let js = 0.5 * kl_to_mixture(&p, &m) + 0.5 * kl_to_mixture(&q, &m);
    Ok(js.max(0.0).sqrt().min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub layer_id: String,
    pub tau: f64,
    pub weighted_f1: f64,
    pub js_divergence: f64,
}

/// Weighted F1 of the binarized tables plus JS divergence of the raw ones.
pub fn alignment_report(dataset: &BiasMatrix, model: &BiasMatrix, tau: f64) -> Result<AlignmentReport> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    dataset.same_axes(model)?;
    let truth = binarize(&dataset.values, tau);
    let pred = binarize(&model.values, tau);
    Ok(AlignmentReport {
        layer_id: model.layer_id.clone().unwrap_or_default(),
        tau,
        weighted_f1: weighted_f1(truth.as_slice(), pred.as_slice())?,
        js_divergence: js_divergence(dataset.values.as_slice(), model.values.as_slice())?,
    })
}
