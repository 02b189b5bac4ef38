//! Categorical cross-entropy over a batch of probability rows.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities below this are clamped before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// How far a probability row may drift from summing to 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the pre-softmax logits, already averaged over
    /// the batch: (p - onehot) / batch. Valid because the rows came from a
    /// softmax.
    pub grad_logits: Tensor,
}

/// Mean negative log-likelihood of the true labels under `probs` ([batch,
/// classes], each row a distribution).
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<LossOutput> {
    if probs.rank() != 2 {
        return Err(Error::InvalidArg(format!(
            "cross_entropy expects [batch, classes], got {:?}",
            probs.shape()
        )));
    }
    let (batch, classes) = (probs.shape()[0], probs.shape()[1]);
    if batch == 0 || classes == 0 {
        return Err(Error::InvalidArg("cross_entropy got an empty batch".into()));
    }
    if labels.len() != batch {
        return Err(Error::InvalidArg(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let data = probs.data();
    let mut grad = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidArg(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = &data[r * classes..(r + 1) * classes];
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::UnnormalizedProbs { row: r, sum });
        }
        loss -= row[label].max(PROB_FLOOR).ln();
        for c in 0..classes {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad[r * classes + c] = (row[c] - onehot) / batch as f64;
        }
    }
    Ok(LossOutput {
        loss: loss / batch as f64,
        grad_logits: Tensor::new(vec![batch, classes], grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_three_way_costs_ln_three() {
        let probs = Tensor::filled(vec![2, 3], 1.0 / 3.0);
        let out = cross_entropy(&probs, &[0, 2]).unwrap();
        assert!((out.loss - 1.0986122886681098).abs() < 1e-15);
    }

    #[test]
    fn half_probability_costs_ln_two() {
        let probs = Tensor::new(vec![1, 3], vec![0.5, 0.25, 0.25]).unwrap();
        let out = cross_entropy(&probs, &[0]).unwrap();
        assert!((out.loss - 0.6931471805599453).abs() < 1e-15);
    }

    #[test]
    fn gradient_is_probs_minus_onehot_over_batch() {
        let probs = Tensor::new(vec![2, 3], vec![0.5, 0.25, 0.25, 0.1, 0.2, 0.7]).unwrap();
        let out = cross_entropy(&probs, &[0, 2]).unwrap();
        let g = out.grad_logits.data();
        assert!((g[0] - (0.5 - 1.0) / 2.0).abs() < 1e-15);
        assert!((g[1] - 0.25 / 2.0).abs() < 1e-15);
        assert!((g[5] - (0.7 - 1.0) / 2.0).abs() < 1e-15);
        // each row of the softmax/CE gradient sums to zero
        assert!((g[0] + g[1] + g[2]).abs() < 1e-15);
        assert!((g[3] + g[4] + g[5]).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped_not_infinite() {
        let probs = Tensor::new(vec![1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let out = cross_entropy(&probs, &[0]).unwrap();
        assert!(out.loss.is_finite());
        // -ln(1e-12) = 12 ln 10
        assert!((out.loss - 27.631021115928547).abs() < 1e-12);
        assert!(out.grad_logits.data().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn rejects_rows_that_do_not_sum_to_one() {
        let probs = Tensor::new(vec![1, 3], vec![0.5, 0.2, 0.2]).unwrap();
        match cross_entropy(&probs, &[0]) {
            Err(Error::UnnormalizedProbs { row: 0, sum }) => {
                assert!((sum - 0.9).abs() < 1e-12)
            }
            other => panic!("expected UnnormalizedProbs, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_labels_and_empty_batches() {
        let probs = Tensor::filled(vec![1, 3], 1.0 / 3.0);
        assert!(cross_entropy(&probs, &[3]).is_err());
        assert!(cross_entropy(&probs, &[0, 1]).is_err());
        let empty = Tensor::zeros(vec![0, 3]);
        assert!(cross_entropy(&empty, &[]).is_err());
    }
}
