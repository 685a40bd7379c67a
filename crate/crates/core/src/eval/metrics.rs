use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Binary detection metrics with the synthetic class as positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1_positive: f64,
    /// Pooled-count F1 over both classes; equals accuracy here.
    pub f1_micro: f64,
    pub threshold: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Hard decisions at `threshold` (probability ≥ threshold is synthetic).
pub fn compute_metrics(probabilities: &[f64], labels: &[f64], threshold: f64) -> Result<Metrics> {
    if probabilities.is_empty() {
        return Err(Error::Empty("predictions".into()));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: probabilities.len(),
            context: "predictions vs labels".into(),
        });
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &y) in probabilities.iter().zip(labels) {
        match (p >= threshold, y >= 0.5) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1_positive = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        confusion: c,
        precision,
        recall,
        f1_positive,
        f1_micro: ratio(c.tp + c.tn, c.total()),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let m = compute_metrics(&[0.9, 0.1, 0.7], &[1.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(m.f1_positive, 1.0);
        assert_eq!(m.f1_micro, 1.0);
    }

    #[test]
    fn all_positive_on_balanced_set() {
        let m = compute_metrics(&[0.8; 4], &[1.0, 1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1_positive - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_counted_mix() {
        let m = compute_metrics(&[0.9, 0.4, 0.6, 0.1], &[1.0, 1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(
            m.confusion,
            Confusion {
                tp: 1,
                fp: 1,
                tn: 1,
                fn_: 1
            }
        );
        assert_eq!(m.f1_positive, 0.5);
        assert_eq!(m.f1_micro, 0.5);
    }

    #[test]
    fn degenerate_cases() {
        let m = compute_metrics(&[0.1, 0.2], &[0.0, 0.0], 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1_positive), (0.0, 0.0, 0.0));
        assert_eq!(m.f1_micro, 1.0);
        assert!(compute_metrics(&[], &[], 0.5).is_err());
        assert!(compute_metrics(&[0.5], &[], 0.5).is_err());
        // the threshold itself counts as positive
        assert_eq!(compute_metrics(&[0.5], &[1.0], 0.5).unwrap().confusion.tp, 1);
    }
}
