//! Loss, Adam updates and classification metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;
/// Predictions at or above this probability count as positive.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("{what}: {left} predictions vs {right} labels")]
    Length {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("non-finite gradient in parameter #{param} (element {index})")]
    NonFiniteGradient { param: usize, index: usize },
    #[error("optimizer tracks {expected} tensors, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("parameter #{param}: {expected} elements in optimizer state, {found} supplied")]
    ParamShape {
        param: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Mean binary cross-entropy recorded on the tape.
pub fn bce_loss<S: Scalar>(tape: &mut Tape<S>, probs: Var, labels: &[u8]) -> Result<Var, OptimError> {
    let n = tape.value(probs)?.len();
    if n != labels.len() {
        return Err(OptimError::Length {
            what: "bce_loss",
            left: n,
            right: labels.len(),
        });
    }
    let targets: Vec<S> = labels.iter().map(|&y| S::from_f64(y as f64)).collect();
    Ok(tape.binary_cross_entropy(probs, &targets, S::from_f64(PROB_CLAMP))?)
}

/// Mean binary cross-entropy of plain values, accumulated in `f64`.
pub fn bce_value<S: Scalar>(probs: &[S], labels: &[u8]) -> Result<f64, OptimError> {
    if probs.len() != labels.len() {
        return Err(OptimError::Length {
            what: "bce_value",
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.to_f64().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let y = y as f64;
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn predicted_label<S: Scalar>(p: S) -> u8 {
    u8::from(p.to_f64() >= THRESHOLD)
}

/// Fraction of rows where `p ≥ 0.5` agrees with the label.
pub fn binary_accuracy<S: Scalar>(probs: &[S], labels: &[u8]) -> Result<f64, OptimError> {
    Ok(count_correct(probs, labels)? as f64 / probs.len().max(1) as f64)
}

pub fn count_correct<S: Scalar>(probs: &[S], labels: &[u8]) -> Result<usize, OptimError> {
    if probs.len() != labels.len() {
        return Err(OptimError::Length {
            what: "binary_accuracy",
            left: probs.len(),
            right: labels.len(),
        });
    }
    Ok(probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| predicted_label(p) == y)
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Running sums for [`Metrics`] over many batches.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricsAccumulator {
    loss_sum: f64,
    correct: usize,
    count: usize,
}

impl MetricsAccumulator {
    pub fn add<S: Scalar>(&mut self, probs: &[S], labels: &[u8]) -> Result<(), OptimError> {
        let loss = bce_value(probs, labels)?;
        self.loss_sum += loss * labels.len() as f64;
        self.correct += count_correct(probs, labels)?;
        self.count += labels.len();
        Ok(())
    }

    pub fn finish(&self) -> Metrics {
        let n = self.count.max(1) as f64;
        Metrics {
            loss: self.loss_sum / n,
            accuracy: self.correct as f64 / n,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub hyper: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(hyper: AdamConfig, params: &[&Tensor<S>]) -> Self {
        AdamState {
            hyper,
            step: 0,
            m: params.iter().map(|p| vec![S::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![S::zero(); p.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step<S: Scalar, G: AsRef<[S]>>(
    params: &mut [&mut Tensor<S>],
    grads: &[G],
    state: &mut AdamState<S>,
) -> Result<(), OptimError> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(OptimError::ParamCount {
            expected: state.m.len(),
            found: params.len().min(grads.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let g = g.as_ref();
        if p.len() != state.m[i].len() || g.len() != state.m[i].len() {
            return Err(OptimError::ParamShape {
                param: i,
                expected: state.m[i].len(),
                found: if p.len() != state.m[i].len() { p.len() } else { g.len() },
            });
        }
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient { param: i, index });
        }
    }

    state.step += 1;
    let h = state.hyper;
    let (b1, b2) = (S::from_f64(h.beta1), S::from_f64(h.beta2));
    let (lr, eps) = (S::from_f64(h.learning_rate), S::from_f64(h.eps));
    let one = S::one();
    let t = state.step.min(i32::MAX as u64) as i32;
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.as_ref()).zip(m).zip(v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
