//! Contrastive objective over cosine scores: a softmax cross-entropy of the
//! positive against its hard negatives, the same against the other
//! positives of the batch, and their unweighted sum. Every loss comes with
//! its gradient with respect to the scores that produced it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::TaskType;

pub const DEFAULT_TEMPERATURE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub pos_score: f64,
    pub neg_scores: Vec<f64>,
    pub temperature: f64,
}

/// Row-major square matrix, `scores[i][j] = s(q_i, d⁺_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchScores {
    size: usize,
    data: Vec<f64>,
    temperature: f64,
}

impl BatchScores {
    pub fn new(size: usize, data: Vec<f64>, temperature: f64) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch scores".into()));
        }
        check_temperature(temperature)?;
        Ok(BatchScores {
            size,
            data,
            temperature,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }
}

/// A loss value and its gradient w.r.t. each participating score.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// For the hard-negative loss: `[pos, neg_0, neg_1, ...]`.
    /// For the in-batch loss: one entry per column of the row.
    pub grads: Vec<f64>,
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::validation(
            "temperature",
            format!("must be > 0, got {t}"),
        ));
    }
    Ok(())
}

/// `-log softmax(scores / τ)[target]` and its gradient w.r.t. `scores`.
fn softmax_cross_entropy(scores: &[f64], target: usize, temperature: f64) -> LossGrad {
    let logits: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();

    let loss = if logits[target] == max {
        // log1p keeps precision when the target dominates.
        let rest: f64 = exps
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != target)
            .map(|(_, e)| e)
            .sum();
        rest.ln_1p()
    } else {
        (max - logits[target]) + total.ln()
    };

    let grads = exps
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let p = e / total;
            let indicator = if j == target { 1.0 } else { 0.0 };
            (p - indicator) / temperature
        })
        .collect();
    LossGrad { loss, grads }
}

pub fn hard_negative_loss(row: &SimilarityRow) -> Result<LossGrad> {
    check_temperature(row.temperature)?;
    if row.neg_scores.is_empty() {
        return Err(Error::validation(
            "neg_scores",
            "at least one negative is required",
        ));
    }
    let mut scores = Vec::with_capacity(row.neg_scores.len() + 1);
    scores.push(row.pos_score);
    scores.extend_from_slice(&row.neg_scores);
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("similarity row".into()));
    }
    Ok(softmax_cross_entropy(&scores, 0, row.temperature))
}

/// In-batch loss for query `i`; the denominator spans every positive in the
/// batch, its own included.
pub fn in_batch_loss(scores: &BatchScores, i: usize) -> Result<LossGrad> {
    if i >= scores.size {
        return Err(Error::OutOfRange {
            index: i,
            len: scores.size,
        });
    }
    Ok(softmax_cross_entropy(scores.row(i), i, scores.temperature))
}

/// Per-sample total: hard + in-batch for retrieval, hard alone otherwise.
pub fn combined_loss(hard: f64, in_batch: Option<f64>, task: TaskType) -> Result<f64> {
    match (task, in_batch) {
        (TaskType::Retrieval, Some(ib)) => Ok(hard + ib),
        (TaskType::Retrieval, None) => Err(Error::validation(
            "in_batch",
            "retrieval samples require an in-batch term",
        )),
        (_, None) => Ok(hard),
        (task, Some(_)) => Err(Error::validation(
            "in_batch",
            format!("in-batch loss is only defined for retrieval samples, got {task}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pos: f64, negs: &[f64], t: f64) -> SimilarityRow {
        SimilarityRow {
            pos_score: pos,
            neg_scores: negs.to_vec(),
            temperature: t,
        }
    }

    #[test]
    fn uniform_logits_give_log_n_plus_one() {
        for n in [1usize, 7, 24] {
            for t in [0.05, 1.0, 3.7] {
                let out = hard_negative_loss(&row(0.3, &vec![0.3; n], t)).unwrap();
                assert!((out.loss - ((n + 1) as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_row_has_vanishing_loss() {
        let out = hard_negative_loss(&row(1.0, &[-1.0], 0.05)).unwrap();
        assert!(out.loss < 1e-17);
        assert!(out.loss >= 0.0);
        assert!(out.grads.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(hard_negative_loss(&row(0.1, &[0.2], 0.0)).is_err());
        assert!(hard_negative_loss(&row(0.1, &[0.2], -1.0)).is_err());
        assert!(hard_negative_loss(&row(0.1, &[], 0.05)).is_err());
        let s = BatchScores::new(2, vec![0.0; 4], 0.05).unwrap();
        assert!(matches!(
            in_batch_loss(&s, 2),
            Err(Error::OutOfRange { .. })
        ));
        assert!(BatchScores::new(2, vec![0.0; 3], 0.05).is_err());
    }

    #[test]
    fn singleton_batch_is_zero() {
        let s = BatchScores::new(1, vec![0.42], 0.05).unwrap();
        assert_eq!(in_batch_loss(&s, 0).unwrap().loss, 0.0);
    }

    #[test]
    fn uniform_batch_gives_log_b() {
        let b = 512;
        let s = BatchScores::new(b, vec![0.17; b * b], 0.05).unwrap();
        for i in [0, 255, 511] {
            assert!((in_batch_loss(&s, i).unwrap().loss - (b as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_paths() {
        assert_eq!(
            combined_loss(2.0794, None, TaskType::Classification).unwrap(),
            2.0794
        );
        assert_eq!(combined_loss(1.5, None, TaskType::Clustering).unwrap(), 1.5);
        assert_eq!(
            combined_loss(1.25, Some(0.5), TaskType::Retrieval).unwrap(),
            1.75
        );
        assert!(combined_loss(1.0, Some(0.5), TaskType::Classification).is_err());
        assert!(combined_loss(1.0, None, TaskType::Retrieval).is_err());
    }
}
