//! Classifier dispatch and persistence: one enum unifies the four
//! one-class fitters behind a single fit/score interface, and a bundle
//! struct ties the fitted classifier to its scaler, feature kind and
//! decision threshold for reuse across runs.

use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::covariance::RobustCovariance;
use super::forest::IsolationForest;
use super::lof::{LocalOutlierFactor, DEFAULT_K};
use super::scaler::RobustScaler;
use super::svm::OneClassSvm;
use super::threshold::DecisionThreshold;
use crate::error::{Error, Result};
use crate::features::FeatureKind;

/// Training outlier fraction used when the configuration does not say
/// otherwise.
pub const DEFAULT_CONTAMINATION: f64 = 0.01;

/// The four one-class classifier kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OneClassKind {
    RobustCovariance,
    Ocsvm,
    IsolationForest,
    Lof,
}

impl OneClassKind {
    pub const ALL: [OneClassKind; 4] = [
        OneClassKind::RobustCovariance,
        OneClassKind::Ocsvm,
        OneClassKind::IsolationForest,
        OneClassKind::Lof,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OneClassKind::RobustCovariance => "robustcovariance",
            OneClassKind::Ocsvm => "ocsvm",
            OneClassKind::IsolationForest => "isolationforest",
            OneClassKind::Lof => "lof",
        }
    }
}

impl std::fmt::Display for OneClassKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OneClassKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        OneClassKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown classifier {s:?}, expected one of robustcovariance, ocsvm, \
                     isolationforest, lof"
                ))
            })
    }
}

/// Fitted state, tagged by kind for JSON persistence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state")]
enum FittedState {
    RobustCovariance(RobustCovariance),
    Ocsvm(OneClassSvm),
    IsolationForest(IsolationForest),
    Lof(LocalOutlierFactor),
}

/// A fitted one-class classifier. Immutable after fit; scores follow one
/// convention across kinds: larger means more anomalous.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneClassModel {
    contamination: f64,
    #[serde(flatten)]
    state: FittedState,
}

impl OneClassModel {
    /// Fits `kind` on scaled OK-only features. `contamination` bounds the
    /// assumed training outlier fraction (the SVM consumes it as `nu`, the
    /// other kinds record it); `seed` drives the isolation forest.
    pub fn fit(
        kind: OneClassKind,
        features: &Array2<f64>,
        contamination: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(contamination > 0.0 && contamination <= 0.5) {
            return Err(Error::Domain(format!(
                "contamination must lie in (0, 0.5], got {contamination}"
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "classifier fit input contains a non-finite value {bad}"
            )));
        }
        let state = match kind {
            OneClassKind::RobustCovariance => {
                FittedState::RobustCovariance(RobustCovariance::fit(features)?)
            }
            OneClassKind::Ocsvm => FittedState::Ocsvm(OneClassSvm::fit(features, contamination)?),
            OneClassKind::IsolationForest => {
                FittedState::IsolationForest(IsolationForest::fit(features, seed)?)
            }
            OneClassKind::Lof => FittedState::Lof(LocalOutlierFactor::fit(features, DEFAULT_K)?),
        };
        Ok(OneClassModel { contamination, state })
    }

    pub fn kind(&self) -> OneClassKind {
        match &self.state {
            FittedState::RobustCovariance(_) => OneClassKind::RobustCovariance,
            FittedState::Ocsvm(_) => OneClassKind::Ocsvm,
            FittedState::IsolationForest(_) => OneClassKind::IsolationForest,
            FittedState::Lof(_) => OneClassKind::Lof,
        }
    }

    pub fn contamination(&self) -> f64 {
        self.contamination
    }

    pub fn dim(&self) -> usize {
        match &self.state {
            FittedState::RobustCovariance(m) => m.dim(),
            FittedState::Ocsvm(m) => m.dim(),
            FittedState::IsolationForest(m) => m.dim(),
            FittedState::Lof(m) => m.dim(),
        }
    }

    /// Anomaly score of one scaled feature vector.
    pub fn score_row(&self, row: &Array1<f64>) -> Result<f64> {
        match &self.state {
            FittedState::RobustCovariance(m) => m.score_row(row),
            FittedState::Ocsvm(m) => m.score_row(row),
            FittedState::IsolationForest(m) => m.score_row(row),
            FittedState::Lof(m) => m.score_row(row),
        }
    }

    /// Anomaly score per row, checked finite.
    pub fn scores(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        let scores = match &self.state {
            FittedState::RobustCovariance(m) => m.scores(features),
            FittedState::Ocsvm(m) => m.scores(features),
            FittedState::IsolationForest(m) => m.scores(features),
            FittedState::Lof(m) => m.scores(features),
        }?;
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite score {bad}",
                self.kind()
            )));
        }
        Ok(scores)
    }
}

/// Everything needed to score and classify new samples: the feature kind
/// the vectors came from, the fitted scaler, the classifier and the
/// decision threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub feature_kind: FeatureKind,
    pub scaler: RobustScaler,
    pub classifier: OneClassModel,
    pub threshold: DecisionThreshold,
}

impl ModelBundle {
    /// Scales raw feature rows and scores them in one step.
    pub fn score_raw(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        let scaled = self.scaler.transform(features)?;
        self.classifier.scores(&scaled)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| {
            Error::Artifact(format!("serializing model bundle: {e}"))
        })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oneclass::threshold::ThresholdSource;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn every_kind_fits_scores_in_one_orientation() {
        let train = cloud(100, 1);
        let outlier = array![25.0, -25.0, 25.0];
        for kind in OneClassKind::ALL {
            let model = OneClassModel::fit(kind, &train, 0.01, 7).unwrap();
            let train_scores = model.scores(&train).unwrap();
            let mean_train: f64 =
                train_scores.iter().sum::<f64>() / train_scores.len() as f64;
            let out_score = model.score_row(&outlier).unwrap();
            assert!(
                out_score > mean_train,
                "{kind}: outlier {out_score} not above mean {mean_train}"
            );
        }
    }

    #[test]
    fn refitting_is_deterministic_for_every_kind() {
        let train = cloud(60, 2);
        let probe = cloud(10, 3);
        for kind in OneClassKind::ALL {
            let a = OneClassModel::fit(kind, &train, 0.05, 11).unwrap();
            let b = OneClassModel::fit(kind, &train, 0.05, 11).unwrap();
            assert_eq!(a.scores(&probe).unwrap(), b.scores(&probe).unwrap(), "{kind}");
        }
    }

    #[test]
    fn contamination_outside_range_is_a_domain_error() {
        let train = cloud(30, 4);
        for bad in [0.0, -0.1, 0.51, 1.0] {
            let err = OneClassModel::fit(OneClassKind::Lof, &train, bad, 0).unwrap_err();
            assert!(matches!(err, Error::Domain(_)), "contamination {bad}");
        }
    }

    #[test]
    fn non_finite_features_are_a_numeric_error() {
        let mut train = cloud(30, 5);
        train[[3, 1]] = f64::NAN;
        let err =
            OneClassModel::fit(OneClassKind::RobustCovariance, &train, 0.01, 0).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in OneClassKind::ALL {
            assert_eq!(kind.name().parse::<OneClassKind>().unwrap(), kind);
            assert_eq!(
                kind.name().to_uppercase().parse::<OneClassKind>().unwrap(),
                kind
            );
        }
        assert!(matches!("kmeans".parse::<OneClassKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn bundle_round_trips_through_json_file() {
        let train = cloud(50, 6);
        let scaler = RobustScaler::fit(&train).unwrap();
        let scaled = scaler.transform(&train).unwrap();
        let classifier =
            OneClassModel::fit(OneClassKind::IsolationForest, &scaled, 0.01, 3).unwrap();
        let bundle = ModelBundle {
            feature_kind: FeatureKind::HardNet3,
            scaler,
            classifier,
            threshold: DecisionThreshold {
                value: 0.55,
                fpr: 0.1,
                fnr: 0.1,
                source: ThresholdSource::Validation,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        bundle.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        assert_eq!(back.feature_kind, FeatureKind::HardNet3);
        assert_eq!(back.threshold, bundle.threshold);
        let probe = cloud(5, 7);
        assert_eq!(bundle.score_raw(&probe).unwrap(), back.score_raw(&probe).unwrap());
    }

    #[test]
    fn missing_bundle_file_is_an_io_error() {
        let err = ModelBundle::load(Path::new("/nonexistent/bundle.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
