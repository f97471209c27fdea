//! Evaluation of anomaly classifications: confusion counts, ratio
//! metrics, ROC/AUC and per-combination reports.

mod metrics;
mod report;
mod roc;

pub use metrics::{binary_metrics, confusion_counts, f1_from, BinaryMetrics, ConfusionCounts};
pub use report::{build_report, write_reports_csv, CombinationId, EvaluationReport};
pub use roc::{roc_auc, RocPoint};
