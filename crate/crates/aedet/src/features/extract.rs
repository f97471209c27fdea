//! Turns a reconstruction triplet into one fixed-length feature vector.
//!
//! Six extractor kinds are available. `ErrMetrics` compares original and
//! reconstruction globally; `Sift` summarizes keypoints in the residual;
//! the four HardNet variants apply a patch descriptor either to the whole
//! (resized) image or to its 32x32 block grid and reduce the descriptors
//! to scalars per block.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::autoencoder::ReconstructionTriplet;
use crate::dataset::SampleLabel;
use crate::error::{Error, Result};
use crate::features::blocks::{block_count, split_blocks, BLOCK_SIZE};
use crate::features::descriptor::{PatchDescriptor, DESCRIPTOR_LEN};
use crate::features::errmetrics::err_metrics;
use crate::features::sift::{keypoint_summary, SIFT_SUMMARY_LEN};

/// Floor applied to the cosine before the logarithm in `HardNet4`; keeps
/// orthogonal and opposing blocks finite instead of `-inf`.
const LOG_COSINE_FLOOR: f32 = 1e-6;

/// The six feature extractor kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FeatureKind {
    ErrMetrics,
    Sift,
    HardNet1,
    HardNet2,
    HardNet3,
    HardNet4,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::ErrMetrics,
        FeatureKind::Sift,
        FeatureKind::HardNet1,
        FeatureKind::HardNet2,
        FeatureKind::HardNet3,
        FeatureKind::HardNet4,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::ErrMetrics => "errmetrics",
            FeatureKind::Sift => "sift",
            FeatureKind::HardNet1 => "hardnet1",
            FeatureKind::HardNet2 => "hardnet2",
            FeatureKind::HardNet3 => "hardnet3",
            FeatureKind::HardNet4 => "hardnet4",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown feature extractor {s:?}, expected one of errmetrics, sift, \
                     hardnet1, hardnet2, hardnet3, hardnet4"
                ))
            })
    }
}

/// Which image `HardNet1` describes. The default follows the residual
/// reading; the alternative describes the untouched input instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hardnet1Source {
    #[default]
    Difference,
    Original,
}

impl FromStr for Hardnet1Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "difference" => Ok(Hardnet1Source::Difference),
            "original" => Ok(Hardnet1Source::Original),
            other => Err(Error::Config(format!(
                "unknown hardnet1 source {other:?}, expected difference or original"
            ))),
        }
    }
}

/// A configured feature extractor. Cheap to clone; the descriptor backend
/// is shared.
#[derive(Clone)]
pub struct Extractor {
    kind: FeatureKind,
    descriptor: Arc<PatchDescriptor>,
    hardnet1_source: Hardnet1Source,
}

impl Extractor {
    pub fn new(kind: FeatureKind, descriptor: Arc<PatchDescriptor>) -> Self {
        Extractor { kind, descriptor, hardnet1_source: Hardnet1Source::default() }
    }

    /// Convenience constructor that builds the descriptor from an optional
    /// weights path (`None` or a missing file selects the fallback).
    pub fn with_weights(kind: FeatureKind, weights: Option<&Path>) -> Result<Self> {
        Ok(Extractor::new(kind, Arc::new(PatchDescriptor::from_weights(weights)?)))
    }

    pub fn hardnet1_source(mut self, source: Hardnet1Source) -> Self {
        self.hardnet1_source = source;
        self
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn descriptor(&self) -> &PatchDescriptor {
        &self.descriptor
    }

    /// Feature vector length for a given image shape. Constant per
    /// (kind, shape); block-based kinds need dimensions divisible by 32.
    pub fn feature_len(&self, height: usize, width: usize) -> Result<usize> {
        check_divisible(height, width)?;
        Ok(match self.kind {
            FeatureKind::ErrMetrics => 4,
            FeatureKind::Sift => SIFT_SUMMARY_LEN,
            FeatureKind::HardNet1 => DESCRIPTOR_LEN,
            FeatureKind::HardNet2 | FeatureKind::HardNet3 | FeatureKind::HardNet4 => {
                block_count(height, width)
            }
        })
    }

    /// Computes the feature vector for one triplet.
    pub fn extract(&self, triplet: &ReconstructionTriplet) -> Result<Vec<f32>> {
        check_triplet(triplet)?;
        let values = match self.kind {
            FeatureKind::ErrMetrics => {
                err_metrics(&triplet.original, &triplet.reconstruction)?.to_vec()
            }
            FeatureKind::Sift => keypoint_summary(&triplet.difference.to_gray())?.to_vec(),
            FeatureKind::HardNet1 => {
                let source = match self.hardnet1_source {
                    Hardnet1Source::Difference => &triplet.difference,
                    Hardnet1Source::Original => &triplet.original,
                };
                let patch = source.resize_bilinear(BLOCK_SIZE, BLOCK_SIZE)?.to_gray();
                self.descriptor.describe(&patch)?
            }
            FeatureKind::HardNet2 => {
                let blocks = split_blocks(&triplet.difference.to_gray())?;
                let mut norms = Vec::with_capacity(blocks.len());
                for block in &blocks {
                    let d = self.descriptor.describe(block)?;
                    norms.push(d.iter().map(|v| v * v).sum::<f32>().sqrt());
                }
                norms
            }
            FeatureKind::HardNet3 => self.block_cosines(triplet)?,
            FeatureKind::HardNet4 => self
                .block_cosines(triplet)?
                .into_iter()
                .map(|c| c.clamp(LOG_COSINE_FLOOR, 1.0).ln())
                .collect(),
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite feature value {bad}",
                self.kind
            )));
        }
        Ok(values)
    }

    /// Cosine similarity between the descriptors of corresponding blocks
    /// of the original and the reconstruction.
    fn block_cosines(&self, triplet: &ReconstructionTriplet) -> Result<Vec<f32>> {
        let orig_blocks = split_blocks(&triplet.original.to_gray())?;
        let recon_blocks = split_blocks(&triplet.reconstruction.to_gray())?;
        let mut cosines = Vec::with_capacity(orig_blocks.len());
        for (a, b) in orig_blocks.iter().zip(&recon_blocks) {
            let da = self.descriptor.describe(a)?;
            let db = self.descriptor.describe(b)?;
            // Descriptors are unit-norm, so the dot product is the cosine;
            // the clamp only absorbs rounding.
            let dot: f32 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
            cosines.push(dot.clamp(-1.0, 1.0));
        }
        Ok(cosines)
    }
}

fn check_divisible(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || height % BLOCK_SIZE != 0 || width % BLOCK_SIZE != 0 {
        return Err(Error::Shape(format!(
            "feature extraction needs dimensions divisible by {BLOCK_SIZE}, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_triplet(triplet: &ReconstructionTriplet) -> Result<()> {
    let o = &triplet.original;
    for (name, img) in
        [("reconstruction", &triplet.reconstruction), ("difference", &triplet.difference)]
    {
        if img.height() != o.height() || img.width() != o.width() || img.channels() != o.channels()
        {
            return Err(Error::Shape(format!(
                "triplet {name} shape {}x{}x{} does not match original {}x{}x{}",
                img.height(),
                img.width(),
                img.channels(),
                o.height(),
                o.width(),
                o.channels()
            )));
        }
    }
    check_divisible(o.height(), o.width())
}

/// One sample's feature vector with its identity and ground truth, the
/// row format of the exported CSV matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub sample_id: String,
    pub label: SampleLabel,
    pub values: Vec<f32>,
}

/// Writes records as CSV with header `sample_id,label,f0..fK-1`. All
/// records must share one feature length.
pub fn write_features_csv(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let width = records.first().map(|r| r.values.len()).unwrap_or(0);
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend((0..width).map(|i| format!("f{i}")));
    writer.write_record(&header).map_err(csv_error)?;
    for record in records {
        if record.values.len() != width {
            return Err(Error::Shape(format!(
                "feature length {} of sample {} does not match the first record's {width}",
                record.values.len(),
                record.sample_id
            )));
        }
        let mut row = vec![record.sample_id.clone(), record.label.to_string()];
        row.extend(record.values.iter().map(|v| format!("{v}")));
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::io("flushing feature csv", e))?;
    Ok(())
}

/// Reads a feature CSV written by [`write_features_csv`].
pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        if row.len() < 2 {
            return Err(Error::Parse {
                context: path.display().to_string(),
                message: format!(
                    "feature csv row has {} columns, need at least sample_id and label",
                    row.len()
                ),
            });
        }
        let mut values = Vec::with_capacity(row.len() - 2);
        for field in row.iter().skip(2) {
            values.push(field.parse::<f32>().map_err(|e| Error::Parse {
                context: path.display().to_string(),
                message: format!("bad feature value {field:?}: {e}"),
            })?);
        }
        out.push(FeatureRecord {
            sample_id: row[0].to_string(),
            label: row[1].parse()?,
            values,
        });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse { context: "feature csv".into(), message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fallback() -> Arc<PatchDescriptor> {
        Arc::new(PatchDescriptor::from_weights(None).unwrap())
    }

    fn noisy(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_gray(Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0f32)))
            .unwrap()
    }

    fn triplet(original: &Image, reconstruction: &Image) -> ReconstructionTriplet {
        ReconstructionTriplet {
            original: original.clone(),
            reconstruction: reconstruction.clone(),
            difference: original.absdiff(reconstruction).unwrap(),
        }
    }

    #[test]
    fn feature_lengths_follow_kind_and_shape() {
        let d = fallback();
        let expected = [
            (FeatureKind::ErrMetrics, 4),
            (FeatureKind::Sift, 6),
            (FeatureKind::HardNet1, 128),
            (FeatureKind::HardNet2, 32),
            (FeatureKind::HardNet3, 32),
            (FeatureKind::HardNet4, 32),
        ];
        let img = noisy(0, 128, 256);
        let t = triplet(&img, &noisy(1, 128, 256));
        for (kind, len) in expected {
            let ex = Extractor::new(kind, d.clone());
            assert_eq!(ex.feature_len(128, 256).unwrap(), len, "{kind}");
            assert_eq!(ex.extract(&t).unwrap().len(), len, "{kind}");
        }
    }

    #[test]
    fn identity_triplet_hits_the_fixed_points() {
        let d = fallback();
        let img = noisy(2, 64, 64);
        let t = triplet(&img, &img);
        let em = Extractor::new(FeatureKind::ErrMetrics, d.clone()).extract(&t).unwrap();
        assert_eq!(em[0], 0.0);
        assert_abs_diff_eq!(em[1], 1.0, epsilon = 1e-6);
        assert_eq!(em[2], 0.0);
        assert_eq!(em[3], 0.0);
        let h3 = Extractor::new(FeatureKind::HardNet3, d.clone()).extract(&t).unwrap();
        for c in &h3 {
            assert_abs_diff_eq!(*c, 1.0, epsilon = 1e-5);
        }
        let h4 = Extractor::new(FeatureKind::HardNet4, d).extract(&t).unwrap();
        for v in &h4 {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn hardnet3_stays_in_cosine_range_and_hardnet4_nonpositive() {
        let d = fallback();
        let t = triplet(&noisy(3, 64, 96), &noisy(4, 64, 96));
        let h3 = Extractor::new(FeatureKind::HardNet3, d.clone()).extract(&t).unwrap();
        assert!(h3.iter().all(|c| (-1.0..=1.0).contains(c)));
        let h4 = Extractor::new(FeatureKind::HardNet4, d).extract(&t).unwrap();
        assert!(h4.iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn hardnet1_source_flag_switches_the_described_image() {
        let d = fallback();
        let t = triplet(&noisy(5, 64, 64), &noisy(6, 64, 64));
        let from_diff = Extractor::new(FeatureKind::HardNet1, d.clone()).extract(&t).unwrap();
        let from_orig = Extractor::new(FeatureKind::HardNet1, d)
            .hardnet1_source(Hardnet1Source::Original)
            .extract(&t)
            .unwrap();
        assert_eq!(from_diff.len(), 128);
        assert_eq!(from_orig.len(), 128);
        assert_ne!(from_diff, from_orig);
    }

    #[test]
    fn extraction_is_deterministic() {
        let d = fallback();
        let t = triplet(&noisy(7, 64, 64), &noisy(8, 64, 64));
        for kind in FeatureKind::ALL {
            let ex = Extractor::new(kind, d.clone());
            assert_eq!(ex.extract(&t).unwrap(), ex.extract(&t).unwrap(), "{kind}");
        }
    }

    #[test]
    fn indivisible_shapes_are_rejected_for_every_kind() {
        let d = fallback();
        let t = triplet(&noisy(9, 100, 100), &noisy(10, 100, 100));
        for kind in FeatureKind::ALL {
            let ex = Extractor::new(kind, d.clone());
            assert!(matches!(ex.extract(&t).unwrap_err(), Error::Shape(_)), "{kind}");
        }
    }

    #[test]
    fn mismatched_triplet_is_a_shape_error() {
        let d = fallback();
        let mut t = triplet(&noisy(11, 64, 64), &noisy(12, 64, 64));
        t.difference = noisy(13, 32, 32);
        let ex = Extractor::new(FeatureKind::Sift, d);
        assert!(matches!(ex.extract(&t).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in FeatureKind::ALL {
            assert_eq!(kind.name().parse::<FeatureKind>().unwrap(), kind);
            assert_eq!(kind.name().to_uppercase().parse::<FeatureKind>().unwrap(), kind);
        }
        assert!(matches!("hog".parse::<FeatureKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn feature_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let records = vec![
            FeatureRecord {
                sample_id: "a-1".into(),
                label: SampleLabel::Ok,
                values: vec![0.25, -1.5, 3.0],
            },
            FeatureRecord {
                sample_id: "a-2".into(),
                label: SampleLabel::Nok,
                values: vec![0.5, 2.25, -0.125],
            },
        ];
        write_features_csv(&path, &records).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back, records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,label,f0,f1,f2"));
        assert!(text.contains("a-1,OK,"));
    }

    #[test]
    fn ragged_records_cannot_be_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let records = vec![
            FeatureRecord { sample_id: "a".into(), label: SampleLabel::Ok, values: vec![1.0] },
            FeatureRecord {
                sample_id: "b".into(),
                label: SampleLabel::Ok,
                values: vec![1.0, 2.0],
            },
        ];
        assert!(matches!(write_features_csv(&path, &records).unwrap_err(), Error::Shape(_)));
    }
}
