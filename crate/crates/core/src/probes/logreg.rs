//! Class-weighted L2-regularized logistic regression, solved by damped Newton.
//!
//! Minimizes
//!
//! ```text
//! f(w, b) = sum_n s_n * [softplus(z_n) - y_n * z_n] + ||w||^2 / (2C),   z_n = w.x_n + b
//! ```
//!
//! where `s_n` is the class weight of sample `n`. The bias is not penalized.
//! The parameter vector is laid out as `[w_1, .., w_U, b]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::weights::ClassWeights;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop once the gradient infinity-norm is at or below this.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// False when `max_iterations` ran out or the line search stalled above
    /// tolerance.
    pub converged: bool,
    pub gradient_norm: f64,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// The training objective over a fixed design matrix.
pub struct LogisticObjective<'a> {
    features: &'a Matrix<f64>,
    labels: &'a [bool],
    sample_weights: Vec<f64>,
    inv_c: f64,
    /// `[features | 1]`, column-major for the Hessian product.
    augmented: DMatrix<f64>,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(features: &'a Matrix<f64>, labels: &'a [bool], c: f64, weights: ClassWeights) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
        }
        Ok(Self {
            features,
            labels,
            sample_weights: labels.iter().map(|&y| weights.of(y)).collect(),
            inv_c: 1.0 / c,
            augmented: DMatrix::from_fn(features.rows(), features.cols() + 1, |n, j| {
                if j < features.cols() {
                    features.get(n, j)
                } else {
                    1.0
                }
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.features.cols() + 1
    }

    fn margins(&self, params: &[f64]) -> Vec<f64> {
        let (w, b) = params.split_at(self.features.cols());
        (0..self.features.rows())
            .map(|n| dot(self.features.row(n), w) + b[0])
            .collect()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let z = self.margins(params);
        let loss: f64 = z
            .iter()
            .zip(self.labels)
            .zip(&self.sample_weights)
            .map(|((&z, &y), &s)| s * (softplus(z) - if y { z } else { 0.0 }))
            .sum();
        let w = &params[..self.features.cols()];
        loss + 0.5 * self.inv_c * dot(w, w)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.gradient_at(params, &self.margins(params))
    }

    fn gradient_at(&self, params: &[f64], z: &[f64]) -> Vec<f64> {
        let u = self.features.cols();
        let mut g = vec![0.0; u + 1];
        for n in 0..self.features.rows() {
            let r = self.sample_weights[n] * (sigmoid(z[n]) - f64::from(u8::from(self.labels[n])));
            for (gj, &x) in g.iter_mut().zip(self.features.row(n)) {
                *gj += r * x;
            }
            g[u] += r;
        }
        for j in 0..u {
            g[j] += self.inv_c * params[j];
        }
        g
    }

    fn hessian_at(&self, z: &[f64]) -> DMatrix<f64> {
        let u = self.features.cols();
        let mut weighted = self.augmented.clone();
        for (n, mut row) in weighted.row_iter_mut().enumerate() {
            let p = sigmoid(z[n]);
            row *= self.sample_weights[n] * p * (1.0 - p);
        }
        let mut h = self.augmented.tr_mul(&weighted);
        for a in 0..u {
            h[(a, a)] += self.inv_c;
        }
        // exact symmetry for the Cholesky factorization
        for a in 0..=u {
            for b in 0..a {
                let v = 0.5 * (h[(a, b)] + h[(b, a)]);
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        h
    }

    /// `f(params + step) - f(params)`, summed per sample so that small
    /// decreases near the optimum are not lost to cancellation.
    fn change(&self, params: &[f64], z: &[f64], step: &[f64], z_step: &[f64]) -> f64 {
        let mut delta = 0.0;
        for n in 0..z.len() {
            let dz = z_step[n] - z[n];
            // softplus(z + dz) - softplus(z), mirrored for z >= 0 so the
            // small factor is never 1 - sigmoid(z) rounded to zero.
            let softplus_change = if z[n] >= 0.0 {
                dz + (sigmoid(-z[n]) * (-dz).exp_m1()).ln_1p()
            } else {
                (sigmoid(z[n]) * dz.exp_m1()).ln_1p()
            };
            let linear = if self.labels[n] { dz } else { 0.0 };
            delta += self.sample_weights[n] * (softplus_change - linear);
        }
        let u = self.features.cols();
        let penalty: f64 = (0..u).map(|j| step[j] * (2.0 * params[j] + step[j])).sum();
        delta + 0.5 * self.inv_c * penalty
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton direction `-H^{-1} g`, adding diagonal jitter if the Hessian is
/// numerically singular.
fn newton_direction(h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let rhs = DVector::from_iterator(g.len(), g.iter().map(|x| -x));
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1e-12, f64::max);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut hj = h.clone();
        for i in 0..hj.nrows() {
            hj[(i, i)] += jitter;
        }
        if let Some(chol) = hj.cholesky() {
            let d = chol.solve(&rhs);
            if d.iter().all(|x| x.is_finite()) {
                return d.iter().copied().collect();
            }
        }
        jitter = if jitter == 0.0 { scale * 1e-10 } else { jitter * 100.0 };
    }
    rhs.iter().copied().collect()
}

/// Fits weights and bias from a zero start.
pub fn fit_logreg(
    features: &Matrix<f64>,
    labels: &[bool],
    c: f64,
    weights: ClassWeights,
    opts: &FitOptions,
) -> Result<LogisticFit> {
    if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeature {
            row: pos / features.cols().max(1),
            column: pos % features.cols().max(1),
        });
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::SingleClass);
    }
    let objective = LogisticObjective::new(features, labels, c, weights)?;
    let dim = objective.dim();
    let mut params = vec![0.0; dim];
    let mut z = objective.margins(&params);
    let mut f = objective.value(&params);
    let mut trace = vec![f];
    let mut g = objective.gradient_at(&params, &z);
    let mut gnorm = inf_norm(&g);
    let mut iterations = 0;

    while gnorm > opts.tolerance && iterations < opts.max_iterations {
        let dir = newton_direction(objective.hessian_at(&z), &g);
        let slope = dot(&g, &dir);
        let dir = if slope < 0.0 {
            dir
        } else {
            g.iter().map(|x| -x).collect()
        };
        let slope = dot(&g, &dir);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let step: Vec<f64> = dir.iter().map(|d| t * d).collect();
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            let z_trial = objective.margins(&trial);
            let delta = objective.change(&params, &z, &step, &z_trial);
            if delta <= ARMIJO * t * slope {
                accepted = Some((trial, z_trial, delta));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, z_trial, delta)) = accepted else {
            break;
        };
        params = trial;
        z = z_trial;
        f += delta;
        trace.push(f);
        g = objective.gradient_at(&params, &z);
        gnorm = inf_norm(&g);
        iterations += 1;
    }

    let bias = params.pop().unwrap_or(0.0);
    Ok(LogisticFit {
        weights: params,
        bias,
        iterations,
        converged: gnorm <= opts.tolerance,
        gradient_norm: gnorm,
        objective_trace: trace,
    })
}
