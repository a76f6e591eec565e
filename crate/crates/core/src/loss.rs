//! Exact numeric forms of the four training objectives, as pure functions
//! over scorer outputs. No gradients here; these exist so losses can be
//! audited and external trainers validated.

use thiserror::Error;

use crate::scorer::ContinuationScore;

/// Probabilities are clamped to `[EPSILON, 1 - EPSILON]` before taking logs.
pub const EPSILON: f64 = 1e-7;

/// A computed loss with its per-item breakdown (per token for the node loss,
/// per positive for the rank loss).
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LossError {
    #[error("continuation has no tokens")]
    EmptyTarget,
    #[error("score list is empty")]
    EmptyScores,
    #[error("no positive indices given")]
    NoPositives,
    #[error("positive index {index} out of range for {len} scores")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Binary cross entropy on the link probability:
/// `-(z*ln(p) + (1-z)*ln(1-p))` with `p` clamped.
pub fn link_loss(p: f64, z: bool) -> LossValue {
    let p = p.clamp(EPSILON, 1.0 - EPSILON);
    let value = if z { -p.ln() } else { -(1.0 - p).ln() };
    LossValue {
        value,
        components: vec![value],
    }
}

/// Token-level reconstruction loss: the negated sum of the target's
/// log-probabilities.
pub fn node_loss(continuation: &ContinuationScore) -> Result<LossValue, LossError> {
    if continuation.token_logprobs.is_empty() {
        return Err(LossError::EmptyTarget);
    }
    let components: Vec<f64> = continuation.token_logprobs.iter().map(|lp| -lp).collect();
    Ok(LossValue {
        value: -continuation.total,
        components,
    })
}

/// Functional form for the contrastive pair loss. The Bradley-Terry negative
/// log-sigmoid is the default; the raw negated sigmoid is kept behind this
/// switch for comparison and is negative-valued by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContrastiveForm {
    #[default]
    LogSigmoid,
    NegSigmoid,
}

/// Bradley-Terry pairing of the target log-likelihood with and without
/// session history: `-ln(sigmoid(delta))` where
/// `delta = with_history.total - without_history.total`.
pub fn contrastive_loss(
    with_history: &ContinuationScore,
    without_history: &ContinuationScore,
) -> LossValue {
    contrastive_loss_with(ContrastiveForm::LogSigmoid, with_history, without_history)
}

pub fn contrastive_loss_with(
    form: ContrastiveForm,
    with_history: &ContinuationScore,
    without_history: &ContinuationScore,
) -> LossValue {
    let delta = with_history.total - without_history.total;
    let value = match form {
        // ln(1 + e^-d), computed without overflow on either side.
        ContrastiveForm::LogSigmoid => {
            if delta >= 0.0 {
                (-delta).exp().ln_1p()
            } else {
                -delta + delta.exp().ln_1p()
            }
        }
        ContrastiveForm::NegSigmoid => {
            let sigmoid = if delta >= 0.0 {
                1.0 / (1.0 + (-delta).exp())
            } else {
                let e = delta.exp();
                e / (1.0 + e)
            };
            -sigmoid
        }
    };
    LossValue {
        value,
        components: vec![delta],
    }
}

/// Listwise negative log-likelihood: for each positive index,
/// `-ln(exp(s_+) / sum_j exp(s_j))`, summed; computed with max-subtraction.
pub fn rank_loss(scores: &[f64], positive_indices: &[usize]) -> Result<LossValue, LossError> {
    if scores.is_empty() {
        return Err(LossError::EmptyScores);
    }
    if positive_indices.is_empty() {
        return Err(LossError::NoPositives);
    }
    for &i in positive_indices {
        if i >= scores.len() {
            return Err(LossError::IndexOutOfRange {
                index: i,
                len: scores.len(),
            });
        }
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum_exp = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let components: Vec<f64> = positive_indices
        .iter()
        .map(|&i| log_sum_exp - scores[i])
        .collect();
    Ok(LossValue {
        value: components.iter().sum(),
        components,
    })
}
