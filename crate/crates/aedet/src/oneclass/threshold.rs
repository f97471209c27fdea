//! Equal-error-rate threshold selection. Candidate thresholds are the
//! midpoints between adjacent distinct score values plus the two infinite
//! sentinels; the winner minimizes |FPR - FNR| with ties broken toward
//! lower FPR and then the lower threshold. Rate comparisons run on exact
//! integer cross-products, so tie handling never depends on float
//! rounding.

use serde::{Deserialize, Serialize};

use crate::dataset::SampleLabel;
use crate::error::{Error, Result};

/// Which split the threshold was selected on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    Validation,
    Test,
}

/// A selected decision threshold with its achieved error rates. Scores
/// strictly above the value are classified NOK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionThreshold {
    /// Score cutoff; may be infinite for degenerate score sets.
    #[serde(with = "extended_f64")]
    pub value: f64,
    /// Fraction of OK samples above the threshold (misflagged).
    pub fpr: f64,
    /// Fraction of NOK samples at or below the threshold (missed).
    pub fnr: f64,
    pub source: ThresholdSource,
}

/// Serde helpers for a possibly infinite f64, stored as a JSON number or
/// the strings "inf"/"-inf" (plain JSON has no infinity literal).
mod extended_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct ExtendedVisitor;

    impl Visitor<'_> for ExtendedVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or \"inf\"/\"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("unexpected threshold string {other:?}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtendedVisitor)
    }
}

/// Error counts at one candidate threshold.
fn counts_at(scores: &[f64], labels: &[SampleLabel], threshold: f64) -> (u64, u64) {
    let mut false_positives = 0;
    let mut false_negatives = 0;
    for (s, l) in scores.iter().zip(labels) {
        match l {
            SampleLabel::Ok if *s > threshold => false_positives += 1,
            SampleLabel::Nok if *s <= threshold => false_negatives += 1,
            _ => {}
        }
    }
    (false_positives, false_negatives)
}

/// Selects the threshold minimizing |FPR - FNR| over all midpoint and
/// infinite candidates.
pub fn select_threshold_eer(
    scores: &[f64],
    labels: &[SampleLabel],
    source: ThresholdSource,
) -> Result<DecisionThreshold> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("threshold selection saw a NaN score: {bad}")));
    }
    let n_ok = labels.iter().filter(|l| **l == SampleLabel::Ok).count() as u64;
    let n_nok = labels.len() as u64 - n_ok;
    if n_ok == 0 || n_nok == 0 {
        return Err(Error::Domain(
            "threshold selection needs both OK and NOK samples".into(),
        ));
    }

    let mut unique: Vec<f64> = scores.to_vec();
    unique.sort_by(|a, b| a.total_cmp(b));
    unique.dedup();
    let mut candidates = Vec::with_capacity(unique.len() + 1);
    candidates.push(f64::NEG_INFINITY);
    candidates.extend(unique.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(f64::INFINITY);

    // Integer-exact objective: |fpr - fnr| ~ |fp * n_nok - fn * n_ok|,
    // the common positive denominator n_ok * n_nok dropped.
    let mut best: Option<(u128, u64, f64, u64, u64)> = None;
    for t in candidates {
        let (fp, fn_) = counts_at(scores, labels, t);
        let cross = (fp as u128 * n_nok as u128).abs_diff(fn_ as u128 * n_ok as u128);
        let better = match &best {
            None => true,
            Some((best_cross, best_fp, ..)) => {
                cross < *best_cross || (cross == *best_cross && fp < *best_fp)
            }
        };
        if better {
            best = Some((cross, fp, t, fp, fn_));
        }
    }
    let (_, _, value, fp, fn_) = best.expect("candidate list is never empty");
    Ok(DecisionThreshold {
        value,
        fpr: fp as f64 / n_ok as f64,
        fnr: fn_ as f64 / n_nok as f64,
        source,
    })
}

/// Applies a threshold: scores strictly above it become NOK, ties stay OK.
pub fn classify(scores: &[f64], threshold: f64) -> Vec<SampleLabel> {
    scores
        .iter()
        .map(|s| if *s > threshold { SampleLabel::Nok } else { SampleLabel::Ok })
        .collect()
}
