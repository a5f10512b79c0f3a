//! Classification scores shared by profiling and trace evaluation.

use crate::error::{Error, Result};

/// Per-class F1 `2pr/(p+r)`, 0 when `p + r = 0`.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Macro F1: unweighted mean of per-class F1 over the classes present in
/// `labels`. Predictions of absent classes still count as false positives
/// against nothing, so they only lower recall of the true class.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::InvalidConfig(format!(
                "class index out of range for {num_classes} classes"
            )));
        }
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fneg[y] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..num_classes {
        let support = tp[c] + fneg[c];
        if support == 0 {
            continue;
        }
        present += 1;
        let predicted = tp[c] + fp[c];
        let precision = if predicted == 0 {
            0.0
        } else {
            tp[c] as f64 / predicted as f64
        };
        let recall = tp[c] as f64 / support as f64;
        sum += f1_from_pr(precision, recall);
    }
    Ok(sum / present as f64)
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Standard deviation over mean; 0 for an all-zero vector.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let m = mean(values);
    if m == 0.0 {
        return 0.0;
    }
    std_dev(values) / m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_f1_from_precision_recall() {
        assert!((f1_from_pr(0.6, 0.4) - 0.48).abs() < 1e-12);
        assert_eq!(f1_from_pr(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_predictions() {
        assert_eq!(macro_f1(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap(), 1.0);
    }

    #[test]
    fn binary_half_precision_half_recall() {
        // Class 1: TP=1, FP=1, FN=1. Class 0 has TP=1, FP=1, FN=1 too.
        let preds = [1, 1, 0, 0];
        let labels = [1, 0, 1, 0];
        let f1 = macro_f1(&preds, &labels, 2).unwrap();
        assert!((f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn absent_classes_do_not_count() {
        // Only class 0 present; one wrong prediction to class 2.
        let f1 = macro_f1(&[0, 2], &[0, 0], 3).unwrap();
        // class 0: p = 1, r = 0.5
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(macro_f1(&[], &[], 2).is_err());
    }

    #[test]
    fn cv_of_constant_is_zero() {
        assert_eq!(coefficient_of_variation(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(coefficient_of_variation(&[0.0, 0.0]), 0.0);
    }
}
