//! ROC curves over anomaly scores and the area under them.
//!
//! Scores are oriented so that larger means more anomalous, so the curve
//! treats NOK as the detection target: the true-positive rate is the
//! fraction of NOK samples at or above a threshold, the false-positive
//! rate the fraction of OK samples there. The curve is built with the
//! single-pass descending-score sweep, emitting one point per distinct
//! score, so trapezoidal integration reproduces the pairwise concordance
//! probability with ties counted one half.

use serde::{Deserialize, Serialize};

use crate::dataset::SampleLabel;
use crate::error::{Error, Result};

/// One operating point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Sweeps every distinct score as a threshold and returns the ROC points
/// ordered by false-positive rate together with the trapezoidal AUC.
pub fn roc_auc(scores: &[f64], labels: &[SampleLabel]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in ROC input".into()));
    }
    let positives = labels.iter().filter(|&&l| l == SampleLabel::Nok).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Domain(
            "ROC needs both an OK and a NOK sample".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 2);
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev: Option<f64> = None;
    for &idx in &order {
        if prev != Some(scores[idx]) {
            points.push(RocPoint {
                fpr: fp as f64 / negatives as f64,
                tpr: tp as f64 / positives as f64,
            });
            prev = Some(scores[idx]);
        }
        match labels[idx] {
            SampleLabel::Nok => tp += 1,
            SampleLabel::Ok => fp += 1,
        }
    }
    points.push(RocPoint { fpr: 1.0, tpr: 1.0 });

    let mut auc = 0.0f64;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[0].tpr + pair[1].tpr) / 2.0;
    }
    Ok((points, auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use SampleLabel::{Nok, Ok as LOk};

    /// Probability that a random NOK outscores a random OK, ties half.
    fn concordance(scores: &[f64], labels: &[SampleLabel]) -> f64 {
        let mut favorable = 0.0f64;
        let mut pairs = 0usize;
        for (i, &li) in labels.iter().enumerate() {
            if li != Nok {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj != LOk {
                    continue;
                }
                pairs += 1;
                if scores[i] > scores[j] {
                    favorable += 1.0;
                } else if scores[i] == scores[j] {
                    favorable += 0.5;
                }
            }
        }
        favorable / pairs as f64
    }

    #[test]
    fn separated_scores_give_unit_auc() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [LOk, LOk, Nok, Nok];
        let (points, auc) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(points.first().unwrap(), &RocPoint { fpr: 0.0, tpr: 0.0 });
        assert_eq!(points.last().unwrap(), &RocPoint { fpr: 1.0, tpr: 1.0 });
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let scores = [0.5; 6];
        let labels = [LOk, Nok, LOk, Nok, LOk, Nok];
        let (points, auc) = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 1e-15);
        // One tie group: the curve is the single diagonal segment.
        assert_eq!(points.len(), 2);
    }

    #[test]
    fn auc_equals_the_pairwise_concordance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for round in 0..20 {
            let n = 50;
            let labels: Vec<SampleLabel> =
                (0..n).map(|i| if i % 3 == 0 { Nok } else { LOk }).collect();
            let scores: Vec<f64> = (0..n)
                .map(|_| {
                    // Quantized scores force tie groups in most rounds.
                    if round % 2 == 0 {
                        (rng.random_range(0..8) as f64) / 8.0
                    } else {
                        rng.random_range(-2.0..2.0)
                    }
                })
                .collect();
            let (_, auc) = roc_auc(&scores, &labels).unwrap();
            assert!(
                (auc - concordance(&scores, &labels)).abs() < 1e-9,
                "round {round}: auc {auc} vs oracle {}",
                concordance(&scores, &labels)
            );
        }
    }

    #[test]
    fn curve_is_monotone_from_origin_to_corner() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<SampleLabel> =
            (0..40).map(|_| if rng.random_bool(0.5) { Nok } else { LOk }).collect();
        let scores: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let (points, auc) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(points.first().unwrap(), &RocPoint { fpr: 0.0, tpr: 0.0 });
        assert_eq!(points.last().unwrap(), &RocPoint { fpr: 1.0, tpr: 1.0 });
        for pair in points.windows(2) {
            assert!(pair[1].fpr >= pair[0].fpr);
            assert!(pair[1].tpr >= pair[0].tpr);
        }
        assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn single_class_labels_are_a_domain_error() {
        let err = roc_auc(&[0.1, 0.2], &[LOk, LOk]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn non_finite_scores_are_a_numeric_error() {
        let err = roc_auc(&[0.1, f64::NAN], &[LOk, Nok]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    fn mismatched_lengths_are_a_shape_error() {
        let err = roc_auc(&[0.1], &[LOk, Nok]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }
}
