//! One-vs-rest precision/recall/F1 and their micro, macro and weighted
//! aggregates for the seven-class task.

use alloc::vec::Vec;

use crate::dom::{ClassLabel, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub label: ClassLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Neither predicted nor present in the ground truth. Such classes
    /// report zeros and are left out of the macro average.
    pub absent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    /// Mean negative log-likelihood, when probabilities were available.
    pub loss: Option<f64>,
    pub examples: usize,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean of per-class scores.
pub fn macro_average(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Support-weighted mean of per-class scores.
pub fn weighted_average(scores: &[f64], supports: &[usize]) -> f64 {
    let total: usize = supports.iter().sum();
    if total == 0 {
        return 0.0;
    }
    scores
        .iter()
        .zip(supports)
        .map(|(s, &n)| s * n as f64)
        .sum::<f64>()
        / total as f64
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Builds the report from `(truth, predicted)` pairs.
pub fn evaluate_predictions(pairs: &[(ClassLabel, ClassLabel)], loss: Option<f64>) -> MetricsReport {
    let mut tp = [0usize; NUM_CLASSES];
    let mut fp = [0usize; NUM_CLASSES];
    let mut fn_ = [0usize; NUM_CLASSES];
    for &(truth, pred) in pairs {
        if truth == pred {
            tp[truth.index()] += 1;
        } else {
            fp[pred.index()] += 1;
            fn_[truth.index()] += 1;
        }
    }
    let per_class = core::array::from_fn(|i| {
        let precision = ratio(tp[i], tp[i] + fp[i]);
        let recall = ratio(tp[i], tp[i] + fn_[i]);
        let support = tp[i] + fn_[i];
        let absent = support == 0 && fp[i] == 0;
        if absent {
            log::debug!("class {} absent from predictions and truth", ClassLabel::ALL[i]);
        }
        ClassMetrics {
            label: ClassLabel::ALL[i],
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
            absent,
        }
    });

    let total_tp: usize = tp.iter().sum();
    let micro_p = ratio(total_tp, total_tp + fp.iter().sum::<usize>());
    let micro_r = ratio(total_tp, total_tp + fn_.iter().sum::<usize>());
    let present: Vec<f64> = per_class
        .iter()
        .filter(|c: &&ClassMetrics| !c.absent)
        .map(|c| c.f1)
        .collect();
    let f1s: Vec<f64> = per_class.iter().map(|c| c.f1).collect();
    let supports: Vec<usize> = per_class.iter().map(|c| c.support).collect();

    MetricsReport {
        per_class,
        micro_f1: f1_score(micro_p, micro_r),
        macro_f1: macro_average(&present),
        weighted_f1: weighted_average(&f1s, &supports),
        accuracy: ratio(total_tp, pairs.len()),
        loss,
        examples: pairs.len(),
    }
}
