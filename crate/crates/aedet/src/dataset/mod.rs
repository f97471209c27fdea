//! Dataset handling: annotation parsing, sample labeling, splits,
//! canonical resizing and training-time augmentation.

mod annotations;
mod augment;
mod resize;
mod split;
pub mod synthetic;

pub use annotations::{
    parse_annotations, write_coco_dataset, AnnotatedImage, AnnotationFormat, BoundingBox, BoxKind,
};
pub use augment::{add_salt_pepper, augment, AugmentPolicy};
pub use resize::{canonical_resize, canonical_size, species_aspect, AspectClass, RatioTable};
pub use split::{build_split, DatasetSplit, SampleRecord, SpeciesScope, SplitConfig};

use serde::{Deserialize, Serialize};

/// Per-sample ground truth: a sample is NOK when it carries any anomaly
/// evidence, OK otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleLabel {
    Ok,
    Nok,
}

impl std::fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleLabel::Ok => write!(f, "OK"),
            SampleLabel::Nok => write!(f, "NOK"),
        }
    }
}

impl std::str::FromStr for SampleLabel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ok" => Ok(SampleLabel::Ok),
            "nok" => Ok(SampleLabel::Nok),
            other => Err(crate::Error::Parse {
                context: "sample label".into(),
                message: format!("unknown label {other:?}, expected OK or NOK"),
            }),
        }
    }
}

/// Decides the sample-level label from its bounding boxes.
///
/// Clean species boxes that overlap an anomaly-labeled box (intersection
/// area > 0) are discarded first; the sample is NOK if any anomaly or
/// species-anomaly box remains. A discarded clean box never rescues a
/// sample to OK, and a sample with no boxes at all is OK.
pub fn derive_sample_label(boxes: &[BoundingBox]) -> SampleLabel {
    let retained = discard_overlapped_clean(boxes);
    let anomalous = retained
        .iter()
        .any(|b| matches!(b.kind, BoxKind::Anomaly | BoxKind::SpeciesAnomaly));
    if anomalous {
        SampleLabel::Nok
    } else {
        SampleLabel::Ok
    }
}

/// Removes clean species boxes whose area overlaps any anomaly-labeled box.
pub fn discard_overlapped_clean(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    let anomaly_boxes: Vec<&BoundingBox> = boxes
        .iter()
        .filter(|b| matches!(b.kind, BoxKind::Anomaly | BoxKind::SpeciesAnomaly))
        .collect();
    boxes
        .iter()
        .filter(|b| {
            if b.kind != BoxKind::SpeciesClean {
                return true;
            }
            !anomaly_boxes.iter().any(|a| b.intersection_area(a) > 0.0)
        })
        .cloned()
        .collect()
}
