//! Confusion counts and the binary classification metrics derived from
//! them: precision, recall, specificity and F1.

use serde::{Deserialize, Serialize};

use crate::dataset::SampleLabel;
use crate::error::{Error, Result};

/// Outcome tally of a binary classification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl ConfusionCounts {
    /// Number of evaluated samples.
    pub fn total(&self) -> usize {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }

    /// Fraction of correct predictions; independent of which class counts
    /// as positive. Zero on an empty tally.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.true_positives + self.true_negatives) as f64 / total as f64
    }
}

/// Tallies predictions against ground truth. The conventional reading
/// treats OK as the positive class, so a NOK part passed as OK is a false
/// positive and an OK part flagged NOK is a false negative; passing
/// `positive = NOK` swaps the roles.
pub fn confusion_counts(
    predicted: &[SampleLabel],
    truth: &[SampleLabel],
    positive: SampleLabel,
) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions against {} ground-truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut counts = ConfusionCounts {
        true_positives: 0,
        true_negatives: 0,
        false_positives: 0,
        false_negatives: 0,
    };
    for (&pred, &actual) in predicted.iter().zip(truth) {
        match (actual == positive, pred == positive) {
            (true, true) => counts.true_positives += 1,
            (false, false) => counts.true_negatives += 1,
            (false, true) => counts.false_positives += 1,
            (true, false) => counts.false_negatives += 1,
        }
    }
    Ok(counts)
}

/// Ratio metrics of one confusion tally. Every zero denominator yields 0
/// so that reports stay total and comparable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Computes precision, recall, specificity and F1 from a tally.
pub fn binary_metrics(counts: &ConfusionCounts) -> BinaryMetrics {
    let precision = ratio(counts.true_positives, counts.true_positives + counts.false_positives);
    let recall = ratio(counts.true_positives, counts.true_positives + counts.false_negatives);
    let specificity = ratio(counts.true_negatives, counts.true_negatives + counts.false_positives);
    BinaryMetrics { precision, recall, specificity, f1: f1_from(precision, recall) }
}
