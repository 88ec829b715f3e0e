use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{stratified_folds, FoldAssignment};
use crate::matrix::Matrix;

use super::ap::average_precision;
use super::logreg::{fit_logreg, sigmoid, FitOptions};
use super::weights::class_balanced_weights;

/// Training settings shared by every probe of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub c_grid: Vec<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub folds: usize,
    pub seed: u64,
    pub default_c: f64,
    /// Fraction of images used for training; 1.0 trains on all of them.
    pub train_fraction: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            c_grid: vec![0.01, 0.1, 1.0, 10.0],
            max_iterations: 1000,
            tolerance: 1e-6,
            folds: 5,
            seed: 0,
            default_c: 0.1,
            train_fraction: 1.0,
        }
    }
}

impl ProbeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return Err(Error::InvalidArgument("C grid is empty".into()));
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument(format!("C grid value {c} is not positive")));
        }
        if !(self.default_c > 0.0 && self.default_c.is_finite()) {
            return Err(Error::InvalidArgument("default C must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("folds = {} < 2", self.folds)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {} outside (0, 1]",
                self.train_fraction
            )));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }
}

/// One (layer, concept) training job.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub layer_id: String,
    pub concept_index: usize,
    pub concept: String,
    pub settings: ProbeSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub c: f64,
    /// Mean out-of-fold average precision.
    pub average_precision: f64,
}

/// Per-unit standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }

    /// Population mean and standard deviation; constant units get scale 1.
    pub fn fit(features: &Matrix<f32>, rows: &[usize]) -> Self {
        let u = features.cols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; u];
        for &r in rows {
            for (m, &x) in mean.iter_mut().zip(features.row(r)) {
                *m += f64::from(x);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; u];
        for &r in rows {
            for j in 0..u {
                let d = f64::from(features.get(r, j)) - mean[j];
                var[j] += d * d;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, features: &Matrix<f32>, rows: &[usize]) -> Matrix<f64> {
        let u = features.cols();
        let mut out = Vec::with_capacity(rows.len() * u);
        for &r in rows {
            for (j, &x) in features.row(r).iter().enumerate() {
                out.push((f64::from(x) - self.mean[j]) / self.scale[j]);
            }
        }
        Matrix::from_vec(rows.len(), u, out).expect("shape by construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub layer_id: String,
    pub concept_index: usize,
    pub concept: String,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub chosen_c: f64,
    pub cv_scores: Vec<CvScore>,
    pub standardizer: Standardizer,
    pub degenerate: bool,
    /// Constant prediction of a degenerate probe (the empirical rate).
    pub constant_rate: Option<f64>,
    pub converged: bool,
}

impl TrainedProbe {
    /// A plain linear probe on unstandardized features.
    pub fn linear(layer_id: &str, concept_index: usize, weights: Vec<f64>, bias: f64) -> Self {
        let width = weights.len();
        Self {
            layer_id: layer_id.to_string(),
            concept_index,
            concept: format!("c{concept_index}"),
            weights,
            bias,
            chosen_c: 1.0,
            cv_scores: Vec::new(),
            standardizer: Standardizer::identity(width),
            degenerate: false,
            constant_rate: None,
            converged: true,
        }
    }

    /// A constant-rate probe.
    pub fn constant(layer_id: &str, concept_index: usize, width: usize, rate: f64, c: f64) -> Self {
        let clamped = rate.clamp(1e-12, 1.0 - 1e-12);
        Self {
            layer_id: layer_id.to_string(),
            concept_index,
            concept: format!("c{concept_index}"),
            weights: vec![0.0; width],
            bias: (clamped / (1.0 - clamped)).ln(),
            chosen_c: c,
            cv_scores: Vec::new(),
            standardizer: Standardizer::identity(width),
            degenerate: true,
            constant_rate: Some(rate),
            converged: true,
        }
    }
}

/// Probability of concept presence for every row of `features`.
pub fn predict_proba(probe: &TrainedProbe, features: &Matrix<f32>) -> Result<Vec<f64>> {
    if features.cols() != probe.weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} columns, probe expects {}",
            features.cols(),
            probe.weights.len()
        )));
    }
    if let Some(rate) = probe.constant_rate {
        return Ok(vec![rate; features.rows()]);
    }
    let std = &probe.standardizer;
    Ok((0..features.rows())
        .map(|r| {
            let z: f64 = features
                .row(r)
                .iter()
                .enumerate()
                .map(|(j, &x)| probe.weights[j] * (f64::from(x) - std.mean[j]) / std.scale[j])
                .sum::<f64>()
                + probe.bias;
            sigmoid(z)
        })
        .collect())
}

fn fit_on_rows(
    features: &Matrix<f32>,
    labels: &[bool],
    rows: &[usize],
    c: f64,
    settings: &ProbeSettings,
) -> Result<(Standardizer, Vec<f64>, f64, bool)> {
    let standardizer = Standardizer::fit(features, rows);
    let x = standardizer.transform(features, rows);
    let y: Vec<bool> = rows.iter().map(|&r| labels[r]).collect();
    let cw = class_balanced_weights(&y)?;
    let fit = fit_logreg(&x, &y, c, cw, &settings.fit_options())?;
    Ok((standardizer, fit.weights, fit.bias, fit.converged))
}

fn holdout_scores(features: &Matrix<f32>, rows: &[usize], std: &Standardizer, weights: &[f64], bias: f64) -> Vec<f64> {
    let x = std.transform(features, rows);
    (0..x.rows())
        .map(|r| sigmoid(x.row(r).iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias))
        .collect()
}

/// Trains one probe with grid-searched C.
///
/// Each C in the grid is scored by mean out-of-fold average precision over
/// stratified folds; the best wins with ties going to the smaller C. The
/// final probe is refit on all rows at the chosen C. Too few samples of
/// either label skip the search and use `default_c`; a single-class column
/// yields a constant-rate probe.
pub fn train_probe(features: &Matrix<f32>, labels: &[bool], spec: &ProbeSpec) -> Result<TrainedProbe> {
    let settings = &spec.settings;
    settings.validate()?;
    if features.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        let rate = positives as f64 / labels.len().max(1) as f64;
        let mut probe = TrainedProbe::constant(
            &spec.layer_id,
            spec.concept_index,
            features.cols(),
            rate,
            settings.default_c,
        );
        probe.concept = spec.concept.clone();
        return Ok(probe);
    }

    let all_rows: Vec<usize> = (0..labels.len()).collect();
    let mut cv_scores = Vec::new();
    let chosen_c = match stratified_folds(labels, settings.folds, settings.seed)? {
        FoldAssignment::Skipped => settings.default_c,
        FoldAssignment::Assigned(folds) => {
            let mut grid = settings.c_grid.clone();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mut best: Option<(f64, f64)> = None;
            for &c in &grid {
                let mut total = 0.0;
                for fold in 0..settings.folds {
                    let (test, train): (Vec<usize>, Vec<usize>) = all_rows.iter().partition(|&&r| folds[r] == fold);
                    let (std, w, b, _) = fit_on_rows(features, labels, &train, c, settings)?;
                    let scores = holdout_scores(features, &test, &std, &w, b);
                    let truth: Vec<bool> = test.iter().map(|&r| labels[r]).collect();
                    total += average_precision(&scores, &truth)?;
                }
                let mean = total / settings.folds as f64;
                cv_scores.push(CvScore {
                    c,
                    average_precision: mean,
                });
                if best.is_none_or(|(_, s)| mean > s) {
                    best = Some((c, mean));
                }
            }
            best.map(|(c, _)| c).unwrap_or(settings.default_c)
        }
    };

    let (standardizer, weights, bias, converged) = fit_on_rows(features, labels, &all_rows, chosen_c, settings)?;
    Ok(TrainedProbe {
        layer_id: spec.layer_id.clone(),
        concept_index: spec.concept_index,
        concept: spec.concept.clone(),
        weights,
        bias,
        chosen_c,
        cv_scores,
        standardizer,
        degenerate: false,
        constant_rate: None,
        converged,
    })
}
