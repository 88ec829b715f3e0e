use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;

use super::bias::BiasMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLayer {
    pub layer_id: String,
    pub points: Vec<SweepPoint>,
    pub best_tau: f64,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tau_min: f64,
    pub layers: Vec<SweepLayer>,
    /// Mean of the per-layer best scores.
    pub average: f64,
}

/// `0.1, 0.2, .., 0.9`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Per concept, the fraction of classes where the dataset marks the concept
/// present at `tau` that the model also clears `tau`; averaged over concepts
/// that have at least one such class. Zero when no concept does.
pub fn detection_score(dataset: &Matrix<f64>, model: &Matrix<f64>, tau: f64) -> f64 {
    let mut sum = 0.0;
    let mut concepts = 0usize;
    for k in 0..dataset.cols() {
        let mut present = 0usize;
        let mut detected = 0usize;
        for i in 0..dataset.rows() {
            if dataset.get(i, k) >= tau {
                present += 1;
                if model.get(i, k) >= tau {
                    detected += 1;
                }
            }
        }
        if present > 0 {
            sum += detected as f64 / present as f64;
            concepts += 1;
        }
    }
    if concepts == 0 {
        0.0
    } else {
        sum / concepts as f64
    }
}

/// Scores every layer over the grid entries `>= tau_min`; the best τ per
/// layer is the argmax with ties going to the smaller τ.
pub fn threshold_sweep(
    dataset: &BiasMatrix,
    models: &[BiasMatrix],
    tau_grid: &[f64],
    tau_min: f64,
) -> Result<SweepReport> {
    if let Some(t) = tau_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("tau {t} outside [0, 1]")));
    }
    let mut grid: Vec<f64> = tau_grid.iter().copied().filter(|&t| t >= tau_min).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("no grid value >= tau_min {tau_min}")));
    }
    if models.is_empty() {
        return Err(Error::InvalidArgument("no model layers to sweep".into()));
    }
    for m in models {
        dataset.same_axes(m)?;
    }
    let layers = Execution::default().map_slice(models, |m| {
        let points: Vec<SweepPoint> = grid
            .iter()
            .map(|&tau| SweepPoint {
                tau,
                score: detection_score(&dataset.values, &m.values, tau),
            })
            .collect();
        let best = points
            .iter()
            .fold(points[0], |best, p| if p.score > best.score { *p } else { best });
        SweepLayer {
            layer_id: m.layer_id.clone().unwrap_or_default(),
            points,
            best_tau: best.tau,
            best_score: best.score,
        }
    });
    let average = layers.iter().map(|l| l.best_score).sum::<f64>() / layers.len() as f64;
    Ok(SweepReport {
        tau_min,
        layers,
        average,
    })
}

fn fmt_tau(tau: f64) -> String {
    let s = format!("{tau:.2}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

impl SweepReport {
    /// `score (tau)` cell for one layer, e.g. `0.925 (0.6)`.
    pub fn cell(layer: &SweepLayer) -> String {
        format!("{:.3} ({})", layer.best_score, fmt_tau(layer.best_tau))
    }

    /// Aligned plain-text table: one row for `model_name`, a column per
    /// layer holding `score (best tau)`, then the Avg column.
    pub fn to_text_table(&self, model_name: &str) -> String {
        let mut header = vec!["Model".to_string()];
        header.extend(self.layers.iter().map(|l| l.layer_id.clone()));
        header.push("Avg".into());
        let mut row = vec![model_name.to_string()];
        row.extend(self.layers.iter().map(Self::cell));
        row.push(format!("{:.3}", self.average));
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
        format!(
            "Threshold >= {}\n{}\n{}\n{}\n",
            fmt_tau(self.tau_min),
            line(&header),
            rule,
            line(&row)
        )
    }
}
