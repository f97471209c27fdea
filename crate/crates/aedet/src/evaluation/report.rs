//! Per-combination evaluation reports and their CSV export.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{binary_metrics, confusion_counts, ConfusionCounts};
use super::roc::roc_auc;
use crate::autoencoder::{AeCore, ConvPair};
use crate::dataset::SampleLabel;
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::oneclass::{classify, DecisionThreshold, OneClassKind};

/// Identity of one pipeline combination: which reconstruction model,
/// feature extractor and classifier produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CombinationId {
    pub core: AeCore,
    pub conv_pair: ConvPair,
    pub extractor: FeatureKind,
    pub classifier: OneClassKind,
}

impl CombinationId {
    /// The model half of the id, shared by every combination that can
    /// reuse the same trained network.
    pub fn model_id(&self) -> String {
        format!("{}-{}", self.conv_pair, self.core)
    }
}

impl fmt::Display for CombinationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}_{}_{}",
            self.conv_pair,
            self.core,
            self.extractor.name(),
            self.classifier.name()
        )
    }
}

/// Scored outcome of one combination on one evaluation slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub combination: CombinationId,
    /// Which samples were evaluated, e.g. a species name or "all".
    pub species: String,
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub threshold: DecisionThreshold,
    pub counts: ConfusionCounts,
}

impl fmt::Display for EvaluationReport {
    /// Table row rounded to two decimals; stored values keep full precision.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} AUC {:.2} F1 {:.2} P {:.2} R {:.2} S {:.2}",
            self.combination, self.species, self.auc, self.f1, self.precision, self.recall, self.specificity
        )
    }
}

/// Classifies `scores` at `threshold` and assembles the full report:
/// confusion counts with OK as the positive class, the derived ratio
/// metrics, and the threshold-free AUC.
pub fn build_report(
    combination: CombinationId,
    species: &str,
    scores: &[f64],
    labels: &[SampleLabel],
    threshold: DecisionThreshold,
) -> Result<EvaluationReport> {
    let predicted = classify(scores, threshold.value);
    let counts = confusion_counts(&predicted, labels, SampleLabel::Ok)?;
    let metrics = binary_metrics(&counts);
    let (_, auc) = roc_auc(scores, labels)?;
    Ok(EvaluationReport {
        combination,
        species: species.to_string(),
        auc,
        f1: metrics.f1,
        precision: metrics.precision,
        recall: metrics.recall,
        specificity: metrics.specificity,
        threshold,
        counts,
    })
}

fn csv_error(err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("report csv", io),
        other => Error::Parse { context: "report csv".into(), message: format!("{other:?}") },
    }
}

/// Writes reports as CSV with one row per report.
pub fn write_reports_csv(path: &Path, reports: &[EvaluationReport]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer
        .write_record([
            "combination_id",
            "species",
            "auc",
            "f1",
            "precision",
            "recall",
            "specificity",
            "threshold",
            "tp",
            "tn",
            "fp",
            "fn",
        ])
        .map_err(csv_error)?;
    for report in reports {
        writer
            .write_record([
                report.combination.to_string(),
                report.species.clone(),
                report.auc.to_string(),
                report.f1.to_string(),
                report.precision.to_string(),
                report.recall.to_string(),
                report.specificity.to_string(),
                report.threshold.value.to_string(),
                report.counts.true_positives.to_string(),
                report.counts.true_negatives.to_string(),
                report.counts.false_positives.to_string(),
                report.counts.false_negatives.to_string(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::io("flushing report csv", e))?;
    Ok(())
}
