//! One-class classification: robust scaling, four classifier kinds fitted
//! on OK features only, and equal-error-rate threshold selection.

mod covariance;
mod forest;
mod lof;
mod model;
mod scaler;
mod svm;
mod threshold;

pub use covariance::RobustCovariance;
pub use forest::{IsolationForest, SUBSAMPLE, TREE_COUNT};
pub use lof::{LocalOutlierFactor, DEFAULT_K};
pub use model::{ModelBundle, OneClassKind, OneClassModel, DEFAULT_CONTAMINATION};
pub use scaler::{quantile, RobustScaler};
pub use svm::OneClassSvm;
pub use threshold::{classify, select_threshold_eer, DecisionThreshold, ThresholdSource};
