//! CSV tables over grid results: per-species rows for the best combination,
//! and single-axis ablation slices anchored at the best combination.
//!
//! Every table ranks rows by F1 descending (ties broken by the
//! lexicographically smaller row id) and marks the top row in a `best`
//! column. Metric cells are printed with two decimals.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evaluation::{CombinationId, EvaluationReport};

/// Which slice of the grid a table shows.
///
/// Each ablation keeps the named axis (and its pipeline neighbor) fixed at
/// the best combination's values and varies the remaining axis:
///
/// * `FixedExtractorAblation`: extractor and classifier fixed, models vary
///   (plus two sub-tables fixing the conv pair or the core).
/// * `FixedClassifierAblation`: classifier and model fixed, extractors vary.
/// * `FixedModelAblation`: model and extractor fixed, classifiers vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    PerSpecies,
    FixedModelAblation,
    FixedExtractorAblation,
    FixedClassifierAblation,
}

impl TableStyle {
    pub const ALL: [TableStyle; 4] = [
        TableStyle::PerSpecies,
        TableStyle::FixedModelAblation,
        TableStyle::FixedExtractorAblation,
        TableStyle::FixedClassifierAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableStyle::PerSpecies => "per_species",
            TableStyle::FixedModelAblation => "fixed_model_ablation",
            TableStyle::FixedExtractorAblation => "fixed_extractor_ablation",
            TableStyle::FixedClassifierAblation => "fixed_classifier_ablation",
        }
    }
}

impl std::fmt::Display for TableStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.to_ascii_lowercase().replace('-', "_");
        TableStyle::ALL
            .into_iter()
            .find(|style| style.name() == normalized)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown table style {s:?}, expected one of {}",
                    TableStyle::ALL.map(|s| s.name()).join(", ")
                ))
            })
    }
}

/// One output row: an id cell plus the four ranked metrics.
struct Row {
    id: String,
    auc: f64,
    f1: f64,
    precision: f64,
    recall: f64,
}

impl Row {
    fn from_report(id: String, report: &EvaluationReport) -> Self {
        Row {
            id,
            auc: report.auc,
            f1: report.f1,
            precision: report.precision,
            recall: report.recall,
        }
    }
}

fn write_table(path: &Path, id_header: &str, mut rows: Vec<Row>) -> Result<()> {
    rows.sort_by(|a, b| b.f1.total_cmp(&a.f1).then_with(|| a.id.cmp(&b.id)));
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    writer
        .write_record([id_header, "auc", "f1", "precision", "recall", "best"])
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for (i, row) in rows.iter().enumerate() {
        writer
            .write_record([
                row.id.as_str(),
                &format!("{:.2}", row.auc),
                &format!("{:.2}", row.f1),
                &format!("{:.2}", row.precision),
                &format!("{:.2}", row.recall),
                if i == 0 { "*" } else { "" },
            ])
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// All-species rows, i.e. one row per combination.
fn overall_rows(reports: &[EvaluationReport]) -> Vec<&EvaluationReport> {
    reports.iter().filter(|r| r.species == "all").collect()
}

/// The max-F1 combination among all-species rows; ties break on the
/// lexicographically smaller id.
pub fn best_combination(reports: &[EvaluationReport]) -> Result<CombinationId> {
    overall_rows(reports)
        .into_iter()
        .max_by(|a, b| {
            a.f1.total_cmp(&b.f1)
                .then_with(|| b.combination.to_string().cmp(&a.combination.to_string()))
        })
        .map(|r| r.combination)
        .ok_or_else(|| Error::Domain("no all-species reports to rank".into()))
}

fn report_map(reports: &[EvaluationReport]) -> std::collections::HashMap<String, &EvaluationReport> {
    overall_rows(reports).into_iter().map(|r| (r.combination.to_string(), r)).collect()
}

/// Collects the slice rows for `expected` ids, or the list of missing ids.
fn slice_rows(
    expected: &[CombinationId],
    map: &std::collections::HashMap<String, &EvaluationReport>,
    id_of: impl Fn(&CombinationId) -> String,
) -> std::result::Result<Vec<Row>, Vec<String>> {
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for id in expected {
        let key = id.to_string();
        match map.get(&key) {
            Some(report) => rows.push(Row::from_report(id_of(id), report)),
            None => missing.push(key),
        }
    }
    if missing.is_empty() {
        Ok(rows)
    } else {
        Err(missing)
    }
}

fn missing_error(style: TableStyle, mut missing: Vec<String>) -> Error {
    missing.sort();
    missing.dedup();
    Error::Domain(format!(
        "{style} slice is incomplete; missing combination ids: {}",
        missing.join(", ")
    ))
}

/// Writes the CSV tables for `style` into `out_dir` and returns their paths.
///
/// The fixed axes of each slice take the best combination's values. A slice
/// member without a report (for example a failed grid cell) is a domain
/// error naming the missing ids.
pub fn export_tables(
    reports: &[EvaluationReport],
    style: TableStyle,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Domain("cannot export tables from empty results".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let best = best_combination(reports)?;
    let map = report_map(reports);

    // The distinct values each axis takes across the results.
    let overall = overall_rows(reports);
    let mut models: Vec<(crate::autoencoder::ConvPair, crate::autoencoder::AeCore)> =
        overall.iter().map(|r| (r.combination.conv_pair, r.combination.core)).collect();
    models.sort_by_key(|(p, c)| (p.name(), c.name()));
    models.dedup();
    let mut extractors: Vec<_> = overall.iter().map(|r| r.combination.extractor).collect();
    extractors.sort_by_key(|e| e.name());
    extractors.dedup();
    let mut classifiers: Vec<_> = overall.iter().map(|r| r.combination.classifier).collect();
    classifiers.sort_by_key(|c| c.name());
    classifiers.dedup();

    let mut paths = Vec::new();
    match style {
        TableStyle::PerSpecies => {
            let rows: Vec<Row> = reports
                .iter()
                .filter(|r| r.combination == best)
                .map(|r| Row::from_report(r.species.clone(), r))
                .collect();
            if rows.is_empty() {
                return Err(missing_error(style, vec![best.to_string()]));
            }
            let path = out_dir.join("per_species.csv");
            write_table(&path, "species", rows)?;
            paths.push(path);
        }
        TableStyle::FixedExtractorAblation => {
            // Main slice: every model under the best extractor + classifier.
            let expected: Vec<CombinationId> = models
                .iter()
                .map(|&(conv_pair, core)| CombinationId {
                    core,
                    conv_pair,
                    extractor: best.extractor,
                    classifier: best.classifier,
                })
                .collect();
            let rows = slice_rows(&expected, &map, |id| id.model_id())
                .map_err(|missing| missing_error(style, missing))?;
            let path = out_dir.join("fixed_extractor_models.csv");
            write_table(&path, "model", rows)?;
            paths.push(path);

            // Sub-slices: vary one model axis with the other at its best.
            let core_expected: Vec<CombinationId> = models
                .iter()
                .filter(|(p, _)| *p == best.conv_pair)
                .map(|&(conv_pair, core)| CombinationId {
                    core,
                    conv_pair,
                    extractor: best.extractor,
                    classifier: best.classifier,
                })
                .collect();
            let rows = slice_rows(&core_expected, &map, |id| id.core.name().to_string())
                .map_err(|missing| missing_error(style, missing))?;
            let path = out_dir.join("fixed_extractor_cores.csv");
            write_table(&path, "core", rows)?;
            paths.push(path);

            let pair_expected: Vec<CombinationId> = models
                .iter()
                .filter(|(_, c)| *c == best.core)
                .map(|&(conv_pair, core)| CombinationId {
                    core,
                    conv_pair,
                    extractor: best.extractor,
                    classifier: best.classifier,
                })
                .collect();
            let rows = slice_rows(&pair_expected, &map, |id| id.conv_pair.name().to_string())
                .map_err(|missing| missing_error(style, missing))?;
            let path = out_dir.join("fixed_extractor_conv_pairs.csv");
            write_table(&path, "conv_pair", rows)?;
            paths.push(path);
        }
        TableStyle::FixedClassifierAblation => {
            let expected: Vec<CombinationId> = extractors
                .iter()
                .map(|&extractor| CombinationId { extractor, ..best })
                .collect();
            let rows = slice_rows(&expected, &map, |id| id.extractor.name().to_string())
                .map_err(|missing| missing_error(style, missing))?;
            let path = out_dir.join("fixed_classifier_extractors.csv");
            write_table(&path, "extractor", rows)?;
            paths.push(path);
        }
        TableStyle::FixedModelAblation => {
            let expected: Vec<CombinationId> = classifiers
                .iter()
                .map(|&classifier| CombinationId { classifier, ..best })
                .collect();
            let rows = slice_rows(&expected, &map, |id| id.classifier.name().to_string())
                .map_err(|missing| missing_error(style, missing))?;
            let path = out_dir.join("fixed_model_classifiers.csv");
            write_table(&path, "classifier", rows)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{AeCore, ConvPair};
    use crate::evaluation::ConfusionCounts;
    use crate::features::FeatureKind;
    use crate::oneclass::{DecisionThreshold, OneClassKind, ThresholdSource};

    fn report(
        conv_pair: ConvPair,
        core: AeCore,
        extractor: FeatureKind,
        classifier: OneClassKind,
        species: &str,
        f1: f64,
    ) -> EvaluationReport {
        EvaluationReport {
            combination: CombinationId { core, conv_pair, extractor, classifier },
            species: species.to_string(),
            auc: (f1 * 0.9).min(1.0),
            f1,
            precision: f1,
            recall: f1,
            specificity: f1,
            threshold: DecisionThreshold {
                value: 0.5,
                fpr: 0.1,
                fnr: 0.1,
                source: ThresholdSource::Validation,
            },
            counts: ConfusionCounts {
                true_positives: 8,
                true_negatives: 8,
                false_positives: 2,
                false_negatives: 2,
            },
        }
    }

    /// 2 pairs x 1 core x 2 extractors x 2 classifiers, best cell at
    /// (ConvM2, HardNet1, Lof) with F1 0.9.
    fn fixture() -> Vec<EvaluationReport> {
        let mut out = Vec::new();
        for (pair, base) in [(ConvPair::ConvM1, 0.4), (ConvPair::ConvM2, 0.6)] {
            for (ext, bump) in [(FeatureKind::ErrMetrics, 0.0), (FeatureKind::HardNet1, 0.2)] {
                for (cls, nudge) in [(OneClassKind::Ocsvm, 0.0), (OneClassKind::Lof, 0.1)] {
                    out.push(report(pair, AeCore::Bae1, ext, cls, "all", base + bump + nudge));
                }
            }
        }
        out.push(report(
            ConvPair::ConvM2,
            AeCore::Bae1,
            FeatureKind::HardNet1,
            OneClassKind::Lof,
            "Nodularia",
            0.8,
        ));
        out.push(report(
            ConvPair::ConvM2,
            AeCore::Bae1,
            FeatureKind::HardNet1,
            OneClassKind::Lof,
            "Aphanizomenon",
            0.95,
        ));
        out
    }

    #[test]
    fn style_names_round_trip_and_reject_unknowns() {
        for style in TableStyle::ALL {
            assert_eq!(style.name().parse::<TableStyle>().unwrap(), style);
        }
        assert_eq!("Fixed-Model-Ablation".parse::<TableStyle>().unwrap(), TableStyle::FixedModelAblation);
        assert!("fixed_frobnицator".parse::<TableStyle>().is_err());
    }

    #[test]
    fn empty_results_are_a_domain_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = export_tables(&[], TableStyle::PerSpecies, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn best_combination_is_the_max_f1_row() {
        let best = best_combination(&fixture()).unwrap();
        assert_eq!(best.to_string(), "ConvM2-BAE1_hardnet1_lof");
    }

    #[test]
    fn model_ablation_varies_models_with_best_extractor_and_classifier() {
        let dir = tempfile::tempdir().unwrap();
        let paths =
            export_tables(&fixture(), TableStyle::FixedExtractorAblation, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let text = fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines[0], "model,auc,f1,precision,recall,best");
        // Two models, best (higher F1) first and marked.
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("ConvM2-BAE1,"), "{}", lines[1]);
        assert!(lines[1].ends_with(",*"), "{}", lines[1]);
        assert!(lines[2].starts_with("ConvM1-BAE1,"), "{}", lines[2]);
        assert!(lines[2].ends_with(','), "{}", lines[2]);
        // Two decimals everywhere.
        assert!(lines[1].contains("0.90"), "{}", lines[1]);
        assert!(lines[2].contains("0.70"), "{}", lines[2]);
    }

    #[test]
    fn extractor_and_classifier_ablations_have_one_row_per_value() {
        let dir = tempfile::tempdir().unwrap();
        let reports = fixture();

        let paths =
            export_tables(&reports, TableStyle::FixedClassifierAblation, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text.trim().lines().count(), 3, "{text}");
        assert!(text.starts_with("extractor,"));
        assert!(text.contains("hardnet1"));
        assert!(text.contains("errmetrics"));

        let paths = export_tables(&reports, TableStyle::FixedModelAblation, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text.trim().lines().count(), 3, "{text}");
        assert!(text.starts_with("classifier,"));
        assert!(text.contains("lof"));
        assert!(text.contains("ocsvm"));
    }

    #[test]
    fn per_species_lists_each_species_and_the_overall_row() {
        let dir = tempfile::tempdir().unwrap();
        let paths = export_tables(&fixture(), TableStyle::PerSpecies, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines[0], "species,auc,f1,precision,recall,best");
        assert_eq!(lines.len(), 4);
        // Ranked by F1: Aphanizomenon 0.95, all 0.90, Nodularia 0.80.
        assert!(lines[1].starts_with("Aphanizomenon,"));
        assert!(lines[2].starts_with("all,"));
        assert!(lines[3].starts_with("Nodularia,"));
    }

    #[test]
    fn missing_slice_members_are_listed_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut reports = fixture();
        // Drop the ConvM1 row the model slice needs.
        reports.retain(|r| {
            !(r.combination.conv_pair == ConvPair::ConvM1
                && r.combination.extractor == FeatureKind::HardNet1
                && r.combination.classifier == OneClassKind::Lof)
        });
        let err = export_tables(&reports, TableStyle::FixedExtractorAblation, dir.path())
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Domain(_)));
        assert!(msg.contains("ConvM1-BAE1_hardnet1_lof"), "{msg}");
    }
}
