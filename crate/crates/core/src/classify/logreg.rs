use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tfidf::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrHyperparams {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LrHyperparams {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-3,
            learning_rate: 1.0,
            max_iters: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LrError {
    #[error("training needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("feature row {0} has a non-finite value")]
    NonFinite(usize),
    #[error("feature dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
}

/// Multinomial logistic regression, weights stored row-major
/// (`classes.len()` rows of `n_features`).
#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub classes: Vec<String>,
    pub n_features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub hyperparams: LrHyperparams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    /// Loss before the first step and after every accepted step.
    pub losses: Vec<f64>,
    pub final_gradient_norm: f64,
    pub converged: bool,
}

/// Mean cross-entropy plus `(lambda / 2) * ||W||^2` (bias unregularized),
/// with its gradient with respect to weights and bias.
pub fn loss_and_gradient(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    weights: &[f64],
    bias: &[f64],
    l2_lambda: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = weights.len() / n_classes;
    let n = x.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; n_classes];
    let mut loss = 0.0;
    let mut p = vec![0.0; n_classes];
    for (xi, &yi) in x.iter().zip(y) {
        logits_into(weights, bias, d, xi, &mut p);
        let lse = log_sum_exp(&p);
        loss += lse - p[yi];
        for (k, pk) in p.iter_mut().enumerate() {
            let prob = (*pk - lse).exp();
            let r = (prob - f64::from(k == yi)) / n;
            gb[k] += r;
            let row = &mut gw[k * d..(k + 1) * d];
            for (j, v) in xi.iter() {
                row[j] += r * v;
            }
        }
    }
    loss /= n;
    let mut reg = 0.0;
    for (g, w) in gw.iter_mut().zip(weights) {
        reg += w * w;
        *g += l2_lambda * w;
    }
    loss += 0.5 * l2_lambda * reg;
    (loss, gw, gb)
}

fn loss_only(x: &[SparseVector], y: &[usize], n_classes: usize, weights: &[f64], bias: &[f64], l2_lambda: f64) -> f64 {
    let d = weights.len() / n_classes;
    let mut p = vec![0.0; n_classes];
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        logits_into(weights, bias, d, xi, &mut p);
        loss += log_sum_exp(&p) - p[yi];
    }
    loss / x.len() as f64 + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

fn logits_into(weights: &[f64], bias: &[f64], d: usize, x: &SparseVector, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = bias[k] + x.dot(&weights[k * d..(k + 1) * d]);
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Full-batch gradient descent from zero weights. A step that would raise
/// the loss is retried at half the step size, so recorded losses never
/// increase. Stops at `max_iters` or when the gradient norm drops below
/// `tolerance`. Classes are the sorted distinct labels.
pub fn lr_train<S: AsRef<str>>(
    features: &[SparseVector],
    labels: &[S],
    hp: LrHyperparams,
) -> Result<(LrModel, TrainReport), LrError> {
    if features.len() != labels.len() {
        return Err(LrError::LengthMismatch {
            rows: features.len(),
            labels: labels.len(),
        });
    }
    let classes: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(LrError::TooFewClasses(classes.len()));
    }
    let d = features.iter().map(|f| f.dim).max().unwrap_or(0);
    for (i, f) in features.iter().enumerate() {
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(LrError::NonFinite(i));
        }
        if f.dim != d {
            return Err(LrError::Dimension { expected: d, got: f.dim });
        }
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).expect("label is a class"))
        .collect();
    let k = classes.len();
    let mut w = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    let mut step = hp.learning_rate;
    let (mut loss, mut gw, mut gb) = loss_and_gradient(features, &y, k, &w, &b, hp.l2_lambda);
    let mut losses = vec![loss];
    let mut iterations = 0;
    let mut converged = false;
    let grad_norm = |gw: &[f64], gb: &[f64]| gw.iter().chain(gb).map(|g| g * g).sum::<f64>().sqrt();
    let mut gnorm = grad_norm(&gw, &gb);
    while iterations < hp.max_iters {
        if gnorm < hp.tolerance {
            converged = true;
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(w, g)| w - step * g).collect();
            let b_new: Vec<f64> = b.iter().zip(&gb).map(|(b, g)| b - step * g).collect();
            let candidate = loss_only(features, &y, k, &w_new, &b_new, hp.l2_lambda);
            if candidate <= loss {
                w = w_new;
                b = b_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        (loss, gw, gb) = loss_and_gradient(features, &y, k, &w, &b, hp.l2_lambda);
        losses.push(loss);
        gnorm = grad_norm(&gw, &gb);
    }
    if gnorm < hp.tolerance {
        converged = true;
    }
    let model = LrModel {
        classes,
        n_features: d,
        weights: w,
        bias: b,
        hyperparams: hp,
    };
    Ok((
        model,
        TrainReport {
            iterations,
            losses,
            final_gradient_norm: gnorm,
            converged,
        },
    ))
}

impl LrModel {
    pub fn check(&self) -> Result<(), LrError> {
        if self.classes.is_empty() {
            return Err(LrError::Inconsistent("no classes".into()));
        }
        if self.classes.iter().collect::<BTreeSet<_>>().len() != self.classes.len() {
            return Err(LrError::Inconsistent("duplicate class".into()));
        }
        if self.weights.len() != self.classes.len() * self.n_features {
            return Err(LrError::Inconsistent(format!(
                "{} weights for {} classes x {} features",
                self.weights.len(),
                self.classes.len(),
                self.n_features
            )));
        }
        if self.bias.len() != self.classes.len() {
            return Err(LrError::Inconsistent("bias length differs from class count".into()));
        }
        Ok(())
    }

    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>, LrError> {
        if x.dim != self.n_features {
            return Err(LrError::Dimension {
                expected: self.n_features,
                got: x.dim,
            });
        }
        let mut out = vec![0.0; self.classes.len()];
        logits_into(&self.weights, &self.bias, self.n_features, x, &mut out);
        Ok(out)
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>, LrError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Argmax class (first in class order on ties) and the probabilities.
    pub fn predict(&self, x: &SparseVector) -> Result<(&str, Vec<f64>), LrError> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        Ok((&self.classes[best], p))
    }
}

pub fn lr_predict<'m>(model: &'m LrModel, x: &SparseVector) -> Result<(&'m str, Vec<f64>), LrError> {
    model.predict(x)
}
