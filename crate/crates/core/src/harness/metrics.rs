use serde::{Deserialize, Serialize};

use crate::IdSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and f1 of `predicted` against `truth`. Empty
/// denominators give 0.
pub fn set_metrics(predicted: &IdSet, truth: &IdSet) -> Metrics {
    let hits = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hits / predicted.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        hits / truth.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        f1,
    }
}
